//! CSV and JSON serializers for reports and studies, plus atomic file writes.
//!
//! CSVs are UTF-8 with a header row and LF line endings. Reals are printed
//! with Rust's shortest round-trip formatting; infinities print as `inf` in
//! both CSV and JSON.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::analysis::{Bin, RankCorrelationStudy, RankedSample, TopPStudy};
use crate::error::{Error, Result};
use crate::metrics::{RarityReport, RealismReport};

/// Output encoding for per-sample reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Real number that survives JSON encoding: non-finite values become the
/// strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsonReal(pub f64);

impl Serialize for JsonReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&fmt_real(self.0))
        }
    }
}

pub fn fmt_real(v: f64) -> String {
    format!("{v}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Rarity rows ranked by score descending, OOM rows last.
pub fn rarity_csv(report: &RarityReport) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["sample_id", "status", "score", "argmin_sphere"])?;
    for r in report.ranked() {
        let score = r.score.map(fmt_real).unwrap_or_default();
        w.write_record([
            r.sample_id.as_str(),
            r.status.as_str(),
            score.as_str(),
            r.argmin_sphere.as_deref().unwrap_or(""),
        ])?;
    }
    finish(w)
}

pub fn rarity_json(report: &RarityReport) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        k: usize,
        n_scored: usize,
        n_oom: usize,
        records: Vec<&'a crate::metrics::RarityRecord>,
    }
    json(&Doc {
        k: report.k,
        n_scored: report.n_scored,
        n_oom: report.n_oom,
        records: report.ranked(),
    })
}

/// Realism rows in sample order.
pub fn realism_csv(report: &RealismReport) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["sample_id", "realism"])?;
    for r in &report.records {
        w.write_record([r.sample_id.as_str(), &fmt_real(r.realism)])?;
    }
    finish(w)
}

pub fn realism_json(report: &RealismReport) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        sample_id: &'a str,
        realism: JsonReal,
    }
    #[derive(Serialize)]
    struct Doc<'a> {
        k: usize,
        records: Vec<Row<'a>>,
    }
    json(&Doc {
        k: report.k,
        records: report
            .records
            .iter()
            .map(|r| Row {
                sample_id: &r.sample_id,
                realism: JsonReal(r.realism),
            })
            .collect(),
    })
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    json(value)
}

/// Correlation matrix with a leading `k` column and one column per k′.
pub fn study_matrix_csv(study: &RankCorrelationStudy) -> Result<String> {
    let mut w = csv_writer();
    let mut header = vec!["k".to_owned()];
    header.extend(study.ks().map(|k| k.to_string()));
    w.write_record(&header)?;
    for (k, row) in study.ks().zip(&study.matrix) {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|v| fmt_real(*v)));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn study_mean_row_csv(study: &RankCorrelationStudy) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["k", "mean_rho"])?;
    for (k, v) in study.ks().zip(&study.mean_row) {
        w.write_record([k.to_string(), fmt_real(*v)])?;
    }
    finish(w)
}

pub fn study_oom_csv(study: &RankCorrelationStudy) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["k", "oom_fraction"])?;
    for (k, v) in study.ks().zip(&study.oom_curve) {
        w.write_record([k.to_string(), fmt_real(*v)])?;
    }
    finish(w)
}

/// One row per model, one `top_<p>` column per grid point.
pub fn top_p_csv(study: &TopPStudy) -> Result<String> {
    let mut w = csv_writer();
    let mut header = vec!["model".to_owned(), "n_scored".into(), "n_oom".into()];
    header.extend(study.p_grid.iter().map(|p| format!("top_{}", fmt_real(*p))));
    w.write_record(&header)?;
    for row in &study.rows {
        let mut rec = vec![row.model.clone(), row.n_scored.to_string(), row.n_oom.to_string()];
        rec.extend(row.means.iter().map(|v| fmt_real(*v)));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Bins of several series sharing the same edges, one value column each.
pub fn histogram_csv(series: &[(&str, &[Bin])]) -> Result<String> {
    let Some((_, first)) = series.first() else {
        return Err(Error::Argument("no histogram series".into()));
    };
    if series.iter().any(|(_, bins)| bins.len() != first.len()) {
        return Err(Error::Argument("histogram series have different bin counts".into()));
    }
    let mut w = csv_writer();
    let mut header = vec!["bin_lower".to_owned(), "bin_upper".into()];
    header.extend(series.iter().map(|(name, _)| name.to_string()));
    w.write_record(&header)?;
    for (i, bin) in first.iter().enumerate() {
        let mut rec = vec![fmt_real(bin.lower), fmt_real(bin.upper)];
        rec.extend(series.iter().map(|(_, bins)| fmt_real(bins[i].value)));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Ranked samples as `rank,sample_id,<value_column>`.
pub fn ranking_csv(ranking: &[RankedSample], value_column: &str) -> Result<String> {
    let mut w = csv_writer();
    w.write_record(["rank", "sample_id", value_column])?;
    for s in ranking {
        w.write_record([s.rank.to_string(), s.sample_id.clone(), fmt_real(s.value)])?;
    }
    finish(w)
}

/// One id per line, LF-terminated.
pub fn id_lines<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for id in ids {
        out.push_str(id);
        out.push('\n');
    }
    out
}

/// Write `bytes` to a temporary file next to `path`, then rename it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Argument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
