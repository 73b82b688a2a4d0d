//! Sensitivity of rarity rankings to the neighborhood size k.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spearman::spearman;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::knn::{knn_radii_range, DistanceConfig};
use crate::metrics::{rarity_many, RarityReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelationStudy {
    pub k_min: usize,
    pub k_max: usize,
    /// Fakes are restricted to those inside the manifold built with this k.
    pub restriction: usize,
    /// Number of fakes in the restricted set.
    pub n_restricted: usize,
    /// `matrix[a][b]` = Spearman ρ between scores at `k_min + a` and `k_min + b`.
    pub matrix: Vec<Vec<f64>>,
    /// Per k: mean of its matrix row over every k′ in the range.
    pub mean_row: Vec<f64>,
    /// Per k: out-of-manifold fraction over all fakes.
    pub oom_curve: Vec<f64>,
}

impl RankCorrelationStudy {
    pub fn ks(&self) -> RangeInclusive<usize> {
        self.k_min..=self.k_max
    }

    pub fn rho(&self, k: usize, k_prime: usize) -> f64 {
        self.matrix[k - self.k_min][k_prime - self.k_min]
    }
}

/// Rarity scores of one fixed set of fakes (those inside the manifold at
/// `restriction`) computed for every k in `ks`, and their pairwise rank
/// correlations.
///
/// For k below the restriction some restricted fakes fall outside the
/// manifold; each entry is computed over the fakes scored at both ks.
pub fn rank_correlation_study(
    real_feats: impl Into<Arc<FeatureSet>>,
    fakes: &FeatureSet,
    ks: RangeInclusive<usize>,
    restriction: usize,
    cfg: &DistanceConfig,
) -> Result<RankCorrelationStudy> {
    let (k_min, k_max) = (*ks.start(), *ks.end());
    if !ks.contains(&restriction) {
        return Err(Error::Argument(format!(
            "restriction {restriction} outside k range {k_min}..={k_max}"
        )));
    }
    let indices = knn_radii_range(real_feats, ks.clone(), cfg)?;
    let reports = rarity_many(&indices, fakes)?;
    study_from_reports(&reports, k_min, restriction)
}

/// Assemble the study from per-k rarity reports over the same fakes.
pub fn study_from_reports(
    reports: &[RarityReport],
    k_min: usize,
    restriction: usize,
) -> Result<RankCorrelationStudy> {
    let n_k = reports.len();
    let k_max = k_min + n_k - 1;
    let slot = restriction
        .checked_sub(k_min)
        .filter(|s| *s < n_k)
        .ok_or_else(|| Error::Argument(format!("restriction {restriction} outside k range")))?;
    let restricted: Vec<usize> = reports[slot]
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.score.is_some())
        .map(|(j, _)| j)
        .collect();
    if restricted.len() < 2 {
        return Err(Error::Study(format!(
            "only {} fakes inside the manifold at k = {restriction}",
            restricted.len()
        )));
    }

    let pairs: Vec<(usize, usize)> = (0..n_k)
        .flat_map(|a| (a + 1..n_k).map(move |b| (a, b)))
        .collect();
    let rhos = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = restricted
                .iter()
                .filter_map(|&j| Some((reports[a].records[j].score?, reports[b].records[j].score?)))
                .unzip();
            spearman(&xs, &ys).map_err(|e| {
                Error::Study(format!(
                    "k = {} vs k = {} over {} fakes: {e}",
                    k_min + a,
                    k_min + b,
                    xs.len()
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut matrix = vec![vec![0.0; n_k]; n_k];
    for (a, row) in matrix.iter_mut().enumerate() {
        row[a] = 1.0;
    }
    for (&(a, b), &rho) in pairs.iter().zip(&rhos) {
        matrix[a][b] = rho;
        matrix[b][a] = rho;
    }
    let mean_row = matrix
        .iter()
        .map(|row| row.iter().sum::<f64>() / n_k as f64)
        .collect();
    let oom_curve = reports.iter().map(RarityReport::oom_fraction).collect();

    Ok(RankCorrelationStudy {
        k_min,
        k_max,
        restriction,
        n_restricted: restricted.len(),
        matrix,
        mean_row,
        oom_curve,
    })
}
