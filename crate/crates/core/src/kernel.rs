//! Register-tiled squared-distance kernel.
//!
//! Every dot product is the plain sequential sum `Σ_d q_d·r_d` in `f64`,
//! starting from zero and adding dimensions in order. Products of two `f32`
//! values are exact in `f64`, so fused and unfused multiply-add give the same
//! bits, and the tiled kernel agrees bit-for-bit with [`dot`]. Squared
//! distances are then `(‖q‖² + ‖r‖²) − 2·q·r`, clamped at zero. Two
//! consequences hold regardless of tiling, block size or thread count:
//! `d(a, b) == d(b, a)` exactly, and identical rows are at distance exactly 0.

use rayon::prelude::*;

use crate::features::FeatureSet;

/// Query rows per register tile.
const MR: usize = 4;
/// Reference rows per register tile.
const NR: usize = 24;
/// Dimensions per cache block.
const KC: usize = 256;
/// Query rows per parallel task.
const GROUP: usize = MR * 16;

#[inline(always)]
fn madd(a: f64, b: f64, acc: f64) -> f64 {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, acc)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + acc
    }
}

/// Sequential dot product in `f64`.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (&x, &y)| madd(x as f64, y as f64, acc))
}

#[inline]
pub(crate) fn sq_from_parts(norm_a: f64, norm_b: f64, dot: f64) -> f64 {
    let v = (norm_a + norm_b) - 2.0 * dot;
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Squared distance between two rows, identical to what the kernel produces.
#[inline]
pub(crate) fn sq_dist(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    sq_from_parts(norm_a, norm_b, dot(a, b))
}

pub(crate) fn norms(set: &FeatureSet) -> Vec<f64> {
    set.rows().map(|r| dot(r, r)).collect()
}

/// Reference rows packed as column panels of width `NR`:
/// `panels[p][d][j]` holds coordinate `d` of reference `p·NR + j`.
#[derive(Debug)]
pub(crate) struct PackedRefs {
    pub(crate) n: usize,
    pub(crate) dim: usize,
    pub(crate) norms: Vec<f64>,
    panels: Vec<f64>,
}

impl PackedRefs {
    pub(crate) fn new(set: &FeatureSet) -> Self {
        let (n, dim) = (set.len(), set.dim());
        let n_panels = n.div_ceil(NR);
        let mut panels = vec![0.0f64; n_panels * dim * NR];
        panels
            .par_chunks_mut(dim * NR)
            .enumerate()
            .for_each(|(p, panel)| {
                for j in 0..NR {
                    let r = p * NR + j;
                    if r >= n {
                        break;
                    }
                    for (d, &v) in set.row(r).iter().enumerate() {
                        panel[d * NR + j] = v as f64;
                    }
                }
            });
        Self {
            n,
            dim,
            norms: norms(set),
            panels,
        }
    }

    fn panel(&self, p: usize) -> &[f64] {
        &self.panels[p * self.dim * NR..(p + 1) * self.dim * NR]
    }

    fn n_panels(&self) -> usize {
        self.n.div_ceil(NR)
    }
}

/// Pack `rows` query rows starting at `start` into tiles of `MR` rows:
/// `tiles[t][d][i]` is coordinate `d` of query `start + t·MR + i`.
fn pack_queries(queries: &FeatureSet, start: usize, rows: usize) -> Vec<f64> {
    let dim = queries.dim();
    let n_tiles = rows.div_ceil(MR);
    let mut out = vec![0.0f64; n_tiles * dim * MR];
    for t in 0..n_tiles {
        let tile = &mut out[t * dim * MR..(t + 1) * dim * MR];
        for i in 0..MR {
            let q = t * MR + i;
            if q >= rows {
                break;
            }
            for (d, &v) in queries.row(start + q).iter().enumerate() {
                tile[d * MR + i] = v as f64;
            }
        }
    }
    out
}

#[inline(always)]
fn micro_kernel(q_tile: &[f64], panel: &[f64], d0: usize, d1: usize, acc: &mut [[f64; NR]; MR]) {
    let mut a = *acc;
    let q_tile = &q_tile[d0 * MR..d1 * MR];
    let panel = &panel[d0 * NR..d1 * NR];
    for (q, r) in q_tile.chunks_exact(MR).zip(panel.chunks_exact(NR)) {
        let q: &[f64; MR] = q.try_into().unwrap();
        let r: &[f64; NR] = r.try_into().unwrap();
        for i in 0..MR {
            let qi = q[i];
            for j in 0..NR {
                a[i][j] = madd(qi, r[j], a[i][j]);
            }
        }
    }
    *acc = a;
}

/// Dot products of one group of query rows against every reference,
/// accumulated into `out` (`rows × refs.n`, row-major).
fn dots_group(q_tiles: &[f64], rows: usize, refs: &PackedRefs, out: &mut [f64]) {
    let (n, dim) = (refs.n, refs.dim);
    let n_tiles = rows.div_ceil(MR);
    let mut d0 = 0;
    while d0 < dim {
        let d1 = (d0 + KC).min(dim);
        for p in 0..refs.n_panels() {
            let panel = refs.panel(p);
            let c0 = p * NR;
            let width = NR.min(n - c0);
            for t in 0..n_tiles {
                let q_tile = &q_tiles[t * dim * MR..(t + 1) * dim * MR];
                let height = MR.min(rows - t * MR);
                let mut acc = [[0.0f64; NR]; MR];
                if d0 > 0 {
                    for i in 0..height {
                        let row = &out[(t * MR + i) * n + c0..][..width];
                        acc[i][..width].copy_from_slice(row);
                    }
                }
                micro_kernel(q_tile, panel, d0, d1, &mut acc);
                for i in 0..height {
                    let row = &mut out[(t * MR + i) * n + c0..][..width];
                    row.copy_from_slice(&acc[i][..width]);
                }
            }
        }
        d0 = d1;
    }
}

/// Squared distances of queries `start..start + rows` to all references,
/// written into `out` (`rows × refs.n`, row-major).
pub(crate) fn sq_dists_block(
    queries: &FeatureSet,
    query_norms: &[f64],
    start: usize,
    rows: usize,
    refs: &PackedRefs,
    out: &mut [f64],
) {
    let n = refs.n;
    debug_assert_eq!(out.len(), rows * n);
    debug_assert_eq!(queries.dim(), refs.dim);
    out.par_chunks_mut(GROUP * n)
        .enumerate()
        .for_each(|(g, chunk)| {
            let g_start = start + g * GROUP;
            let g_rows = chunk.len() / n;
            let tiles = pack_queries(queries, g_start, g_rows);
            dots_group(&tiles, g_rows, refs, chunk);
            for (i, row) in chunk.chunks_exact_mut(n).enumerate() {
                let qn = query_norms[g_start + i];
                for (v, &rn) in row.iter_mut().zip(&refs.norms) {
                    *v = sq_from_parts(qn, rn, *v);
                }
            }
        });
}
