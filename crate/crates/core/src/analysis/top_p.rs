use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RarityReport;

/// Default grid of percentages: 0.1, 0.2, …, 1.0.
pub fn default_p_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Mean score of the top `p` percent of scored samples.
///
/// Samples are ranked by score descending (ties by id); the top
/// `ceil(p/100 · n_scored)` are averaged. OOM samples are ignored.
pub fn mean_top_p(report: &RarityReport, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::Argument(format!("p = {p} outside (0, 100]")));
    }
    if report.n_scored == 0 {
        return Err(Error::EmptyReport("no scored samples".into()));
    }
    let ranked = report.ranked();
    let m = ((p / 100.0) * report.n_scored as f64).ceil() as usize;
    let m = m.clamp(1, report.n_scored);
    let sum: f64 = ranked[..m].iter().filter_map(|r| r.score).sum();
    Ok(sum / m as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopPRow {
    pub model: String,
    pub n_scored: usize,
    pub n_oom: usize,
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopPStudy {
    pub p_grid: Vec<f64>,
    pub rows: Vec<TopPRow>,
}

impl TopPStudy {
    pub fn new<'a>(
        p_grid: Vec<f64>,
        models: impl IntoIterator<Item = (&'a str, &'a RarityReport)>,
    ) -> Result<Self> {
        let rows = models
            .into_iter()
            .map(|(name, report)| {
                let means = p_grid
                    .iter()
                    .map(|&p| mean_top_p(report, p))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| match e {
                        Error::EmptyReport(m) => Error::EmptyReport(format!("model `{name}`: {m}")),
                        other => other,
                    })?;
                Ok(TopPRow {
                    model: name.to_owned(),
                    n_scored: report.n_scored,
                    n_oom: report.n_oom,
                    means,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p_grid, rows })
    }
}
