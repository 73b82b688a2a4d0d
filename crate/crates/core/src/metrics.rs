//! Set-level (precision, recall, density, coverage) and per-sample (realism,
//! rarity) metrics over k-NN manifolds.
//!
//! All of them reduce to one scan of the query × reference distance matrix:
//! for each query row we collect the spheres that contain it, and derive
//! everything else from that list.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::knn::{self, ManifoldIndex};

/// Per-query result of a scan against an index.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryStats {
    /// Reference rows whose sphere contains the query, ascending.
    pub containing: Vec<usize>,
    /// Smallest containing sphere as `(reference row, radius)`.
    pub min_sphere: Option<(usize, f64)>,
    /// Max over references of `radius / distance`; `+∞` at zero distance.
    pub realism: f64,
}

/// Raw scan output: one [`QueryStats`] per query plus per-sphere coverage.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub k: usize,
    pub n_refs: usize,
    pub queries: Vec<QueryStats>,
}

impl Evaluation {
    pub fn inside_count(&self) -> usize {
        self.queries.iter().filter(|q| !q.containing.is_empty()).count()
    }

    /// Which reference spheres contain at least one query.
    pub fn covered(&self) -> Vec<bool> {
        let mut covered = vec![false; self.n_refs];
        for q in &self.queries {
            for &i in &q.containing {
                covered[i] = true;
            }
        }
        covered
    }

    pub fn precision(&self) -> f64 {
        self.inside_count() as f64 / self.queries.len() as f64
    }

    pub fn density(&self) -> f64 {
        let total: usize = self.queries.iter().map(|q| q.containing.len()).sum();
        total as f64 / (self.k as f64 * self.queries.len() as f64)
    }

    pub fn coverage(&self) -> f64 {
        let covered = self.covered().iter().filter(|c| **c).count();
        covered as f64 / self.n_refs as f64
    }
}

/// Rows kept when the largest `fraction` of spheres are pruned for realism.
fn realism_mask(index: &ManifoldIndex, fraction: f64) -> Result<Option<Vec<bool>>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "realism prune fraction {fraction} outside [0, 1)"
        )));
    }
    let n = index.len();
    let drop = (fraction * n as f64).floor() as usize;
    if drop == 0 {
        return Ok(None);
    }
    let radii = index.radii();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]).then(a.cmp(&b)));
    let mut keep = vec![false; n];
    for &i in &order[..n - drop] {
        keep[i] = true;
    }
    Ok(Some(keep))
}

/// Scan `queries` against `index`. `realism_prune` drops that fraction of the
/// largest spheres before taking the realism maximum (0 keeps all).
pub fn evaluate(index: &ManifoldIndex, queries: &FeatureSet, realism_prune: f64) -> Result<Evaluation> {
    let mask = realism_mask(index, realism_prune)?;
    let side = index.ref_side();
    let sq_radii = index.sq_radii();
    let radii = index.radii();
    let stats = knn::scan_rows(queries, &side.packed, index.config(), |_, row| {
        let mut containing = Vec::new();
        let mut min_sphere: Option<(usize, f64)> = None;
        let mut realism = 0.0f64;
        for (i, &d2) in row.iter().enumerate() {
            if d2 <= sq_radii[i] {
                containing.push(i);
                if min_sphere.map_or(true, |(_, r)| radii[i] < r) {
                    min_sphere = Some((i, radii[i]));
                }
            }
            if mask.as_ref().map_or(true, |m| m[i]) {
                let ratio = if d2 == 0.0 {
                    f64::INFINITY
                } else {
                    radii[i] / d2.sqrt()
                };
                if ratio > realism {
                    realism = ratio;
                }
            }
        }
        QueryStats {
            containing,
            min_sphere,
            realism,
        }
    })?;
    Ok(Evaluation {
        k: index.k(),
        n_refs: index.len(),
        queries: stats,
    })
}

/// Fraction of fakes inside the real manifold.
pub fn precision(real_index: &ManifoldIndex, fakes: &FeatureSet) -> Result<f64> {
    Ok(evaluate(real_index, fakes, 0.0)?.precision())
}

/// Fraction of reals inside the fake manifold.
pub fn recall(reals: &FeatureSet, fake_index: &ManifoldIndex) -> Result<f64> {
    Ok(evaluate(fake_index, reals, 0.0)?.precision())
}

/// Containing-sphere count per fake, averaged and divided by k.
pub fn density(real_index: &ManifoldIndex, fakes: &FeatureSet) -> Result<f64> {
    Ok(evaluate(real_index, fakes, 0.0)?.density())
}

/// Fraction of real spheres holding at least one fake.
pub fn coverage(real_index: &ManifoldIndex, fakes: &FeatureSet) -> Result<f64> {
    Ok(evaluate(real_index, fakes, 0.0)?.coverage())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Scored,
    OutOfManifold,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Scored => "scored",
            Status::OutOfManifold => "out_of_manifold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityRecord {
    pub sample_id: String,
    pub status: Status,
    pub score: Option<f64>,
    /// Id of the reference sample whose sphere set the score.
    pub argmin_sphere: Option<String>,
    #[serde(skip)]
    pub argmin_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RarityReport {
    pub k: usize,
    pub n_scored: usize,
    pub n_oom: usize,
    pub records: Vec<RarityRecord>,
}

impl RarityReport {
    fn from_stats<'a>(
        k: usize,
        fakes: &FeatureSet,
        refs: &FeatureSet,
        mins: impl Iterator<Item = Option<(usize, f64)>> + 'a,
    ) -> Self {
        let records: Vec<RarityRecord> = mins
            .enumerate()
            .map(|(j, m)| match m {
                Some((i, r)) => RarityRecord {
                    sample_id: fakes.id(j).to_owned(),
                    status: Status::Scored,
                    score: Some(r),
                    argmin_sphere: Some(refs.id(i).to_owned()),
                    argmin_row: Some(i),
                },
                None => RarityRecord {
                    sample_id: fakes.id(j).to_owned(),
                    status: Status::OutOfManifold,
                    score: None,
                    argmin_sphere: None,
                    argmin_row: None,
                },
            })
            .collect();
        let n_scored = records.iter().filter(|r| r.status == Status::Scored).count();
        Self {
            k,
            n_oom: records.len() - n_scored,
            n_scored,
            records,
        }
    }

    pub fn from_evaluation(eval: &Evaluation, fakes: &FeatureSet, refs: &FeatureSet) -> Self {
        Self::from_stats(eval.k, fakes, refs, eval.queries.iter().map(|q| q.min_sphere))
    }

    pub fn n_fake(&self) -> usize {
        self.records.len()
    }

    pub fn oom_fraction(&self) -> f64 {
        self.n_oom as f64 / self.records.len() as f64
    }

    /// Scores of scored samples, in record order.
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.score).collect()
    }

    /// Records by score descending (ties by sample id), OOM rows last in id order.
    pub fn ranked(&self) -> Vec<&RarityRecord> {
        let mut out: Vec<&RarityRecord> = self.records.iter().collect();
        out.sort_by(|a, b| match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| cmp_ids(&a.sample_id, &b.sample_id)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => cmp_ids(&a.sample_id, &b.sample_id),
        });
        out
    }

    /// Scores scaled by `1 / constant`.
    pub fn normalized_scores(&self, constant: f64) -> Result<Vec<f64>> {
        if !(constant > 0.0) {
            return Err(Error::Argument(format!(
                "normalization constant must be positive, got {constant}"
            )));
        }
        Ok(self.scores().into_iter().map(|s| s / constant).collect())
    }
}

/// Orders ids numerically when both parse as integers, else lexically.
pub fn cmp_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

/// Rarity of each fake: the smallest radius among real spheres containing
/// it, or out-of-manifold when no sphere does.
pub fn rarity(real_index: &ManifoldIndex, fakes: &FeatureSet) -> Result<RarityReport> {
    let eval = evaluate(real_index, fakes, 0.0)?;
    Ok(RarityReport::from_evaluation(&eval, fakes, real_index.features()))
}

/// Rarity against several indices built on the same reference set (e.g.
/// one per k), sharing a single distance pass.
pub fn rarity_many(indices: &[ManifoldIndex], fakes: &FeatureSet) -> Result<Vec<RarityReport>> {
    let Some(first) = indices.first() else {
        return Ok(Vec::new());
    };
    let side = first.ref_side();
    if indices
        .iter()
        .any(|ix| !Arc::ptr_eq(&ix.ref_side().features, &side.features))
    {
        return Err(Error::Argument(
            "rarity_many needs indices over one shared reference set".into(),
        ));
    }
    let per_row = knn::scan_rows(fakes, &side.packed, first.config(), |_, row| {
        indices
            .iter()
            .map(|ix| {
                let (sq, radii) = (ix.sq_radii(), ix.radii());
                let mut best: Option<(usize, f64)> = None;
                for (i, &d2) in row.iter().enumerate() {
                    if d2 <= sq[i] && best.map_or(true, |(_, r)| radii[i] < r) {
                        best = Some((i, radii[i]));
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    })?;
    Ok(indices
        .iter()
        .enumerate()
        .map(|(slot, ix)| {
            RarityReport::from_stats(ix.k(), fakes, &side.features, per_row.iter().map(|r| r[slot]))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismRecord {
    pub sample_id: String,
    /// `+∞` when the sample coincides with a real sample.
    pub realism: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub k: usize,
    pub records: Vec<RealismRecord>,
}

impl RealismReport {
    pub fn from_evaluation(eval: &Evaluation, fakes: &FeatureSet) -> Self {
        Self {
            k: eval.k,
            records: eval
                .queries
                .iter()
                .enumerate()
                .map(|(j, q)| RealismRecord {
                    sample_id: fakes.id(j).to_owned(),
                    realism: q.realism,
                })
                .collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.realism).collect()
    }
}

/// Realism score of each fake: `max_i NN_k(φ_i) / d(φ_i, φ_j)`.
pub fn realism(real_index: &ManifoldIndex, fakes: &FeatureSet) -> Result<RealismReport> {
    realism_pruned(real_index, fakes, 0.0)
}

/// Realism with the largest `prune_fraction` of real spheres ignored.
pub fn realism_pruned(
    real_index: &ManifoldIndex,
    fakes: &FeatureSet,
    prune_fraction: f64,
) -> Result<RealismReport> {
    let eval = evaluate(real_index, fakes, prune_fraction)?;
    Ok(RealismReport::from_evaluation(&eval, fakes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub k: usize,
    pub n_real: usize,
    pub n_fake: usize,
    pub precision: f64,
    pub recall: f64,
    pub density: f64,
    pub coverage: f64,
}

/// All four set-level metrics for one (real, fake, k) triple.
pub fn summarize(real_index: &ManifoldIndex, fake_index: &ManifoldIndex) -> Result<MetricSummary> {
    if real_index.k() != fake_index.k() {
        return Err(Error::Argument(format!(
            "real index uses k = {}, fake index k = {}",
            real_index.k(),
            fake_index.k()
        )));
    }
    let reals = real_index.features();
    let fakes = fake_index.features();
    let forward = evaluate(real_index, fakes, 0.0)?;
    Ok(MetricSummary {
        k: real_index.k(),
        n_real: reals.len(),
        n_fake: fakes.len(),
        precision: forward.precision(),
        recall: recall(reals, fake_index)?,
        density: forward.density(),
        coverage: forward.coverage(),
    })
}
