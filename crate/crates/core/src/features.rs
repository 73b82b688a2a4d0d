//! Embedding matrices and their on-disk formats.
//!
//! A [`FeatureSet`] is an N×D row-major `f32` matrix with one identifier per
//! row. Matrices are stored as NPY v1.0 (`'<f4'`, C order, shape `(N, D)`).
//! Identifiers live in an optional sidecar next to the matrix: for
//! `feats.npy` the sidecar is `feats.ids.txt`, UTF-8, one id per line, in row
//! order. Without a sidecar, ids default to `"0"`..`"N-1"`.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::npy;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    ids: Arc<[String]>,
    data: Vec<f32>,
    rows: usize,
    dim: usize,
    source_tag: String,
}

impl FeatureSet {
    /// Build a set, checking shape, finiteness and id uniqueness.
    pub fn new(
        ids: Vec<String>,
        data: Vec<f32>,
        dim: usize,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dimension must be at least 1".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} values do not divide into rows of width {dim}",
                data.len()
            )));
        }
        let rows = data.len() / dim;
        if rows == 0 {
            return Err(Error::Validation("feature set has no rows".into()));
        }
        if ids.len() != rows {
            return Err(Error::Validation(format!(
                "{} ids for {rows} rows",
                ids.len()
            )));
        }
        if let Some(row) = data
            .chunks_exact(dim)
            .position(|r| r.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation(format!("non-finite value in row {row}")));
        }
        let mut seen = HashSet::with_capacity(rows);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id `{id}`")));
            }
        }
        Ok(Self {
            ids: ids.into(),
            data,
            rows,
            dim,
            source_tag: source_tag.into(),
        })
    }

    /// Build a set with default ids `"0"`..`"N-1"`.
    pub fn from_matrix(data: Vec<f32>, dim: usize, source_tag: impl Into<String>) -> Result<Self> {
        let rows = if dim == 0 { 0 } else { data.len() / dim };
        Self::new(default_ids(rows), data, dim, source_tag)
    }

    /// Convenience constructor from explicit rows (all of equal length).
    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::Shape("rows have unequal length".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_matrix(data, dim, "")
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    /// Rows at `indices`, in the given order, with their ids.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Argument(format!("row {i} out of range 0..{}", self.rows)));
            }
            data.extend_from_slice(self.row(i));
            ids.push(self.ids[i].clone());
        }
        Self::new(ids, data, self.dim, self.source_tag.clone())
    }

    /// Every coordinate multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Self::new(self.ids.to_vec(), data, self.dim, self.source_tag.clone())
    }

    /// Stack `self` on top of `other`. Ids are prefixed with the given labels
    /// so that the two id spaces cannot collide.
    pub fn concat(&self, other: &Self, label_self: &str, label_other: &str) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Argument(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        let ids = self
            .ids
            .iter()
            .map(|id| format!("{label_self}:{id}"))
            .chain(other.ids.iter().map(|id| format!("{label_other}:{id}")))
            .collect();
        Self::new(
            ids,
            data,
            self.dim,
            format!("{}+{}", self.source_tag, other.source_tag),
        )
    }
}

pub(crate) fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Path of the id sidecar for a matrix file (`x.npy` → `x.ids.txt`).
pub fn ids_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("ids.txt")
}

/// Load an N×D `'<f4'` NPY matrix and its optional id sidecar.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, start) = npy::parse_header(&bytes)?;
    if header.shape.len() != 2 {
        return Err(Error::Shape(format!(
            "expected a 2-dimensional array, got shape {:?}",
            header.shape
        )));
    }
    let data = npy::decode_f32(&header, &bytes[start..])?;
    let (rows, dim) = (header.shape[0], header.shape[1]);
    if rows == 0 || dim == 0 {
        return Err(Error::Validation(format!(
            "empty matrix of shape ({rows}, {dim})"
        )));
    }

    let sidecar = ids_sidecar_path(path);
    let ids = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let ids: Vec<String> = text.lines().map(str::to_owned).collect();
        if ids.len() != rows {
            return Err(Error::Validation(format!(
                "{} lists {} ids but the matrix has {rows} rows",
                sidecar.display(),
                ids.len()
            )));
        }
        ids
    } else {
        default_ids(rows)
    };
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSet::new(ids, data, dim, tag)
}

/// Write the matrix as NPY v1.0 plus the id sidecar.
pub fn save_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = npy::encode_f32(&[set.len(), set.dim()], set.data());
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = ids_sidecar_path(path);
    let mut text = String::new();
    for id in set.ids() {
        text.push_str(id);
        text.push('\n');
    }
    fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}

/// Row indices chosen by [`subsample`], ascending.
///
/// Uses ChaCha8 seeded with `seed` and Floyd/rejection sampling from
/// `rand::seq::index::sample`; the result is sorted so that the subsample
/// keeps the original row order.
pub fn subsample_indices(n: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::Argument("subsample count must be positive".into()));
    }
    if count > n {
        return Err(Error::Argument(format!(
            "cannot draw {count} samples from a set of {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, count).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform draw of `count` rows without replacement, deterministic in `seed`.
pub fn subsample(set: &FeatureSet, count: usize, seed: u64) -> Result<FeatureSet> {
    let idx = subsample_indices(set.len(), count, seed)?;
    set.select(&idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Real,
    Fake,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub role: Role,
    pub extractor: String,
}

/// JSON array of `{name, path, role, extractor}` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parse and validate a manifest. Relative paths are resolved against
    /// the manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut entries: Vec<ManifestEntry> = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("malformed manifest: {e}")))?;
        let mut names = HashSet::new();
        for entry in &mut entries {
            if !names.insert(entry.name.clone()) {
                return Err(Error::Config(format!(
                    "duplicate manifest entry name `{}`",
                    entry.name
                )));
            }
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
            if !entry.path.exists() {
                return Err(Error::Config(format!(
                    "entry `{}`: {} does not exist",
                    entry.name,
                    entry.path.display()
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }
}
