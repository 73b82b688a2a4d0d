//! Exact k-NN radii and sphere membership over L2 distance.
//!
//! Work is done on squared distances; square roots are taken only for values
//! that leave the module (radii, reported distances). Query rows are
//! processed in blocks of `block_rows`, so at most `block_rows × N_ref`
//! distances are alive at any time.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::kernel::{self, PackedRefs};

/// Default working-block budget: 512 MiB of `f64` distances.
pub const DEFAULT_MEMORY_BUDGET: usize = 512 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceConfig {
    /// Query rows per block; `None` derives it from the memory budget.
    pub block_rows: Option<usize>,
    pub memory_budget_bytes: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            block_rows: None,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl DistanceConfig {
    pub fn with_block_rows(block_rows: usize) -> Self {
        Self {
            block_rows: Some(block_rows),
            ..Self::default()
        }
    }

    /// Rows per block for `n_query` queries against `n_ref` references.
    pub fn rows_per_block(&self, n_ref: usize, n_query: usize) -> Result<usize> {
        let row_bytes = n_ref.max(1) * std::mem::size_of::<f64>();
        let rows = match self.block_rows {
            Some(0) => return Err(Error::Config("block_rows must be positive".into())),
            Some(b) => {
                if b.saturating_mul(row_bytes) > self.memory_budget_bytes {
                    return Err(Error::Config(format!(
                        "block of {b} rows × {n_ref} references needs {} bytes, over the {} byte budget",
                        b.saturating_mul(row_bytes),
                        self.memory_budget_bytes
                    )));
                }
                b
            }
            None => {
                let b = self.memory_budget_bytes / row_bytes;
                if b == 0 {
                    return Err(Error::Config(format!(
                        "memory budget of {} bytes cannot hold one row of {n_ref} distances",
                        self.memory_budget_bytes
                    )));
                }
                b
            }
        };
        Ok(rows.min(n_query.max(1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

fn check_dims(queries: usize, refs: usize) -> Result<()> {
    if queries != refs {
        return Err(Error::Argument(format!(
            "dimension mismatch: queries have {queries} columns, references {refs}"
        )));
    }
    Ok(())
}

/// Reference side of a scan: packed rows plus the original set.
#[derive(Debug, Clone)]
pub(crate) struct RefSide {
    pub(crate) features: Arc<FeatureSet>,
    pub(crate) packed: Arc<PackedRefs>,
}

impl RefSide {
    pub(crate) fn new(features: Arc<FeatureSet>) -> Self {
        let packed = Arc::new(PackedRefs::new(&features));
        Self { features, packed }
    }
}

/// Run `f(query_row, squared_distances_to_all_refs)` for every query row,
/// in blocks, returning results in query order. `f` may reorder the slice.
pub(crate) fn scan_rows<T, F>(
    queries: &FeatureSet,
    refs: &PackedRefs,
    cfg: &DistanceConfig,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut [f64]) -> T + Sync,
{
    check_dims(queries.dim(), refs.dim)?;
    let (m, n) = (queries.len(), refs.n);
    let block = cfg.rows_per_block(n, m)?;
    let q_norms = kernel::norms(queries);
    let mut buf = vec![0.0f64; block * n];
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let rows = block.min(m - start);
        let slab = &mut buf[..rows * n];
        kernel::sq_dists_block(queries, &q_norms, start, rows, refs, slab);
        let part: Vec<T> = slab
            .par_chunks_mut(n)
            .enumerate()
            .map(|(r, row)| f(start + r, row))
            .collect();
        out.extend(part);
        start += rows;
    }
    Ok(out)
}

/// Squared L2 distances between every query row and every reference row.
pub fn pairwise_sq_dists(
    queries: &FeatureSet,
    refs: &FeatureSet,
    cfg: &DistanceConfig,
) -> Result<DistanceMatrix> {
    check_dims(queries.dim(), refs.dim())?;
    let packed = PackedRefs::new(refs);
    let rows = scan_rows(queries, &packed, cfg, |_, row| row.to_vec())?;
    Ok(DistanceMatrix {
        rows: queries.len(),
        cols: refs.len(),
        data: rows.concat(),
    })
}

/// A reference set together with its k-NN radii: the spheres `B_k(φ_i)`
/// whose union is the estimated manifold.
#[derive(Debug, Clone)]
pub struct ManifoldIndex {
    refs: RefSide,
    k: usize,
    cfg: DistanceConfig,
    sq_radii: Vec<f64>,
    radii: Vec<f64>,
    kth_neighbor: Vec<usize>,
}

impl ManifoldIndex {
    pub fn features(&self) -> &FeatureSet {
        &self.refs.features
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Blocking used when this index is scanned by queries.
    pub fn config(&self) -> &DistanceConfig {
        &self.cfg
    }

    pub fn with_config(mut self, cfg: DistanceConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn len(&self) -> usize {
        self.sq_radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sq_radii.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.refs.features.dim()
    }

    /// `NN_k(φ_i)` for every reference row.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Squared radii; membership compares against these exactly.
    pub fn sq_radii(&self) -> &[f64] {
        &self.sq_radii
    }

    /// Row index of a k-th nearest neighbor of each reference row.
    pub fn kth_neighbors(&self) -> &[usize] {
        &self.kth_neighbor
    }

    pub(crate) fn ref_side(&self) -> &RefSide {
        &self.refs
    }

    /// Rebuild an index from known k-th neighbor indices. Radii are
    /// recomputed from the neighbor pairs, so they are bit-identical to a
    /// fresh [`knn_radii`] run.
    pub fn from_neighbors(features: Arc<FeatureSet>, k: usize, kth_neighbor: Vec<usize>) -> Result<Self> {
        let n = features.len();
        if kth_neighbor.len() != n {
            return Err(Error::Argument(format!(
                "{} neighbor indices for {n} rows",
                kth_neighbor.len()
            )));
        }
        if k == 0 || k >= n {
            return Err(Error::Argument(format!("k = {k} needs 1 ≤ k < N = {n}")));
        }
        let refs = RefSide::new(features);
        let norms = &refs.packed.norms;
        let f = &refs.features;
        let sq_radii = kth_neighbor
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                if j >= n || j == i {
                    Err(Error::Argument(format!("invalid neighbor {j} for row {i}")))
                } else {
                    Ok(kernel::sq_dist(f.row(i), f.row(j), norms[i], norms[j]))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let radii = sq_radii.iter().map(|v| v.sqrt()).collect();
        Ok(Self {
            refs,
            k,
            cfg: DistanceConfig::default(),
            sq_radii,
            radii,
            kth_neighbor,
        })
    }
}

/// k-NN radii for every row of `refs`, self excluded.
pub fn knn_radii(refs: impl Into<Arc<FeatureSet>>, k: usize, cfg: &DistanceConfig) -> Result<ManifoldIndex> {
    let mut v = knn_radii_range(refs, k..=k, cfg)?;
    Ok(v.pop().expect("one index per k"))
}

/// Indices for every k in `ks` from a single distance pass.
pub fn knn_radii_range(
    refs: impl Into<Arc<FeatureSet>>,
    ks: RangeInclusive<usize>,
    cfg: &DistanceConfig,
) -> Result<Vec<ManifoldIndex>> {
    let features: Arc<FeatureSet> = refs.into();
    let n = features.len();
    let (k_min, k_max) = (*ks.start(), *ks.end());
    if k_min == 0 || k_min > k_max {
        return Err(Error::Argument(format!("invalid k range {k_min}..={k_max}")));
    }
    if k_max >= n {
        return Err(Error::Argument(format!(
            "k = {k_max} needs at least {} reference samples, got {n}",
            k_max + 1
        )));
    }
    let side = RefSide::new(features);
    let n_k = k_max - k_min + 1;

    // per row: (sq radius, neighbor) for each k in the range
    let per_row = scan_rows(&side.features, &side.packed, cfg, |i, row| {
        let mut others: Vec<f64> = Vec::with_capacity(n - 1);
        others.extend_from_slice(&row[..i]);
        others.extend_from_slice(&row[i + 1..]);
        let (head, _, _) = others.select_nth_unstable_by(k_max - 1, f64::total_cmp);
        let mut head = head.to_vec();
        head.push(others[k_max - 1]);
        head.sort_unstable_by(f64::total_cmp);
        (k_min..=k_max)
            .map(|k| {
                let v = head[k - 1];
                let j = row
                    .iter()
                    .enumerate()
                    .position(|(j, &d)| j != i && d == v)
                    .expect("selected value occurs in the row");
                (v, j)
            })
            .collect::<Vec<_>>()
    })?;

    Ok((0..n_k)
        .map(|slot| {
            let sq_radii: Vec<f64> = per_row.iter().map(|r| r[slot].0).collect();
            let kth_neighbor = per_row.iter().map(|r| r[slot].1).collect();
            let radii = sq_radii.iter().map(|v| v.sqrt()).collect();
            ManifoldIndex {
                refs: side.clone(),
                k: k_min + slot,
                cfg: *cfg,
                sq_radii,
                radii,
                kth_neighbor,
            }
        })
        .collect())
}

/// Nearest-neighbor distance of each sample within its own set.
pub fn nnd(refs: impl Into<Arc<FeatureSet>>, cfg: &DistanceConfig) -> Result<Vec<f64>> {
    let refs = refs.into();
    if refs.len() < 2 {
        return Err(Error::Argument(format!(
            "nearest-neighbor distances need at least 2 samples, got {}",
            refs.len()
        )));
    }
    Ok(knn_radii(refs, 1, cfg)?.radii)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipResult {
    pub inside: bool,
    /// `(reference row, radius)` of every sphere containing the query.
    pub containing: Vec<(usize, f64)>,
}

/// Spheres of `index` that contain `query` (boundary inclusive).
pub fn membership(query: &[f32], index: &ManifoldIndex) -> Result<MembershipResult> {
    check_dims(query.len(), index.dim())?;
    let refs = index.features();
    let norms = &index.refs.packed.norms;
    let qn = kernel::dot(query, query);
    let containing: Vec<(usize, f64)> = (0..refs.len())
        .filter(|&i| kernel::sq_dist(query, refs.row(i), qn, norms[i]) <= index.sq_radii[i])
        .map(|i| (i, index.radii[i]))
        .collect();
    Ok(MembershipResult {
        inside: !containing.is_empty(),
        containing,
    })
}
