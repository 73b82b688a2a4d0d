//! Comparing two real datasets on a shared manifold built from their union.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::knn::{knn_radii, DistanceConfig};
use crate::metrics::{rarity, RarityReport};

pub const LABEL_A: &str = "a";
pub const LABEL_B: &str = "b";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionComparison {
    pub k: usize,
    pub report_a: RarityReport,
    pub report_b: RarityReport,
    /// Largest score across both reports.
    pub normalization: f64,
}

impl UnionComparison {
    /// Scores divided by the shared constant, in (0, 1].
    pub fn normalized(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.report_a.normalized_scores(self.normalization)?,
            self.report_b.normalized_scores(self.normalization)?,
        ))
    }
}

/// Score both sets against `manifold_k(A ∪ B)`.
///
/// Every sample is a sphere center of the union, at distance zero from
/// itself, so nobody is out of manifold. Union ids are prefixed `a:`/`b:`,
/// which is what `argmin_sphere` reports.
pub fn union_compare(
    set_a: &FeatureSet,
    set_b: &FeatureSet,
    k: usize,
    cfg: &DistanceConfig,
) -> Result<UnionComparison> {
    if set_a.dim() != set_b.dim() {
        return Err(Error::Argument(format!(
            "dimension mismatch: {} vs {}",
            set_a.dim(),
            set_b.dim()
        )));
    }
    let union = set_a.concat(set_b, LABEL_A, LABEL_B)?;
    let index = knn_radii(union, k, cfg)?;
    let report_a = rarity(&index, set_a)?;
    let report_b = rarity(&index, set_b)?;
    debug_assert_eq!(report_a.n_oom + report_b.n_oom, 0);
    let normalization = report_a
        .scores()
        .into_iter()
        .chain(report_b.scores())
        .fold(0.0, f64::max);
    Ok(UnionComparison {
        k,
        report_a,
        report_b,
        normalization,
    })
}
