//! Minimal NPY v1.0 reader and writer.
//!
//! Only little-endian float arrays in C order are supported, which is all the
//! embedding dumps and radius caches need. Files written here use the same
//! header layout numpy itself produces: the dict literal
//! `{'descr': '<f4', 'fortran_order': False, 'shape': (N, D), }`, padded with
//! spaces so that magic + version + length + header is a multiple of 64 bytes,
//! and terminated by a newline.

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// Parsed header dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

impl Header {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Serialize magic, version and padded header dict.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = match self.shape.len() {
            1 => format!("({},)", self.shape[0]),
            _ => format!(
                "({})",
                self.shape
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let order = if self.fortran_order { "True" } else { "False" };
        let mut dict = format!(
            "{{'descr': '{}', 'fortran_order': {}, 'shape': {}, }}",
            self.descr, order, shape
        );
        // 6 magic + 2 version + 2 length, plus the trailing newline
        let unpadded = 10 + dict.len() + 1;
        let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
        dict.extend(std::iter::repeat(' ').take(pad));
        dict.push('\n');

        let mut out = Vec::with_capacity(10 + dict.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out
    }
}

/// Parse the preamble and header dict. Returns the header and the byte
/// offset where array data begins.
pub fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 10 {
        return Err(Error::format("magic", "file shorter than the NPY preamble"));
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::format("magic", "missing \\x93NUMPY magic string"));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::format(
            "version",
            format!("unsupported version {}.{}, expected 1.0", bytes[6], bytes[7]),
        ));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(Error::format(
            "header_len",
            format!("declared header length {header_len} exceeds file size"),
        ));
    }
    let text = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| Error::format("header", "header is not ASCII"))?;
    if !text.ends_with('\n') {
        return Err(Error::format("header", "header not terminated by newline"));
    }
    let header = parse_dict(text.trim_end())?;
    Ok((header, data_start))
}

fn parse_dict(text: &str) -> Result<Header> {
    let inner = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::format("header", "header is not a dict literal"))?;

    let mut descr = None;
    let mut fortran_order = None;
    let mut shape = None;

    let mut rest = inner.trim_start();
    while !rest.is_empty() {
        let (key, after) = take_quoted(rest).ok_or_else(|| {
            Error::format("header", format!("expected quoted key at `{}`", clip(rest)))
        })?;
        let after = after
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| Error::format("header", format!("missing ':' after key '{key}'")))?
            .trim_start();
        let after = match key {
            "descr" => {
                let (v, after) = take_quoted(after)
                    .ok_or_else(|| Error::format("descr", "value is not a quoted string"))?;
                descr = Some(v.to_string());
                after
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran_order = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran_order = Some(true);
                    a
                } else {
                    return Err(Error::format("fortran_order", "value is not True/False"));
                }
            }
            "shape" => {
                let (v, after) = take_tuple(after)?;
                shape = Some(v);
                after
            }
            other => {
                return Err(Error::format(
                    "header",
                    format!("unexpected key '{other}'"),
                ))
            }
        };
        let after = after.trim_start();
        rest = match after.strip_prefix(',') {
            Some(a) => a.trim_start(),
            None if after.is_empty() => after,
            None => {
                return Err(Error::format(
                    "header",
                    format!("expected ',' at `{}`", clip(after)),
                ))
            }
        };
    }

    Ok(Header {
        descr: descr.ok_or_else(|| Error::format("descr", "key missing"))?,
        fortran_order: fortran_order
            .ok_or_else(|| Error::format("fortran_order", "key missing"))?,
        shape: shape.ok_or_else(|| Error::format("shape", "key missing"))?,
    })
}

fn clip(s: &str) -> &str {
    let end = s.char_indices().nth(16).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let body = &s[1..];
    let end = body.find(quote)?;
    Some((&body[..end], &body[end + 1..]))
}

fn take_tuple(s: &str) -> Result<(Vec<usize>, &str)> {
    let body = s
        .strip_prefix('(')
        .ok_or_else(|| Error::format("shape", "value is not a tuple"))?;
    let end = body
        .find(')')
        .ok_or_else(|| Error::format("shape", "unterminated tuple"))?;
    let dims = body[..end]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::format("shape", format!("bad dimension `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, &body[end + 1..]))
}

/// Decode the data section of an array with the given header as `f32`.
/// Accepts `<f4` only; anything else is a dtype (shape-class) error.
pub fn decode_f32(header: &Header, data: &[u8]) -> Result<Vec<f32>> {
    if header.descr != "<f4" {
        return Err(Error::Shape(format!(
            "element type '{}' is not little-endian float32 ('<f4')",
            header.descr
        )));
    }
    if header.fortran_order {
        return Err(Error::Shape("Fortran-order arrays are not supported".into()));
    }
    let expected = header.element_count() * 4;
    if data.len() != expected {
        return Err(Error::format(
            "shape",
            format!(
                "shape {:?} needs {} data bytes, file has {}",
                header.shape,
                expected,
                data.len()
            ),
        ));
    }
    Ok(data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Encode a C-order `<f4` array of the given shape.
pub fn encode_f32(shape: &[usize], values: &[f32]) -> Vec<u8> {
    debug_assert_eq!(shape.iter().product::<usize>(), values.len());
    let header = Header {
        descr: "<f4".into(),
        fortran_order: false,
        shape: shape.to_vec(),
    };
    let mut out = header.to_bytes();
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
