//! Brute-force reference implementations and data generators shared by the
//! integration tests. Nothing here touches the library's distance kernel:
//! distances are summed coordinate differences, radii come from fully
//! sorting every row.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rarity_core::FeatureSet;

pub fn rows(set: &FeatureSet) -> Vec<Vec<f32>> {
    set.rows().map(<[f32]>::to_vec).collect()
}

pub fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Squared k-NN radius of every row, self excluded.
pub fn sq_radii(refs: &[Vec<f32>], k: usize) -> Vec<f64> {
    (0..refs.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..refs.len()).filter(|&j| j != i).map(|j| sq(&refs[i], &refs[j])).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect()
}

pub fn radii(refs: &[Vec<f32>], k: usize) -> Vec<f64> {
    sq_radii(refs, k).into_iter().map(f64::sqrt).collect()
}

pub struct Manifold {
    pub refs: Vec<Vec<f32>>,
    pub sq_radii: Vec<f64>,
}

impl Manifold {
    pub fn new(refs: Vec<Vec<f32>>, k: usize) -> Self {
        let sq_radii = sq_radii(&refs, k);
        Self { refs, sq_radii }
    }

    pub fn containing(&self, q: &[f32]) -> Vec<usize> {
        (0..self.refs.len())
            .filter(|&i| sq(q, &self.refs[i]) <= self.sq_radii[i])
            .collect()
    }

    /// Smallest containing sphere, lowest index on ties.
    pub fn rarity(&self, q: &[f32]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in self.containing(q) {
            let r = self.sq_radii[i].sqrt();
            match best {
                Some((_, b)) if b <= r => {}
                _ => best = Some((i, r)),
            }
        }
        best
    }

    pub fn realism(&self, q: &[f32]) -> f64 {
        let mut best = 0.0f64;
        for (i, r) in self.refs.iter().enumerate() {
            let d = sq(q, r).sqrt();
            let ratio = if d == 0.0 { f64::INFINITY } else { self.sq_radii[i].sqrt() / d };
            best = best.max(ratio);
        }
        best
    }
}

pub struct SetMetrics {
    pub inside: usize,
    pub containing_total: usize,
    pub covered: usize,
}

pub fn set_metrics(m: &Manifold, queries: &[Vec<f32>]) -> SetMetrics {
    let mut covered = vec![false; m.refs.len()];
    let (mut inside, mut total) = (0, 0);
    for q in queries {
        let c = m.containing(q);
        if !c.is_empty() {
            inside += 1;
        }
        total += c.len();
        for i in c {
            covered[i] = true;
        }
    }
    SetMetrics {
        inside,
        containing_total: total,
        covered: covered.iter().filter(|c| **c).count(),
    }
}

/// Average ranks, computed by brute force: rank = 1 + #smaller + (#equal − 1)/2.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f32 {
    let v: f64 = StandardNormal.sample(rng);
    v as f32
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize, mean: &[f32], sigma: f32) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|j| mean[j % mean.len()] + sigma * normal(rng)).collect())
        .collect()
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()
}

/// Small integers: exact arithmetic with plenty of distance ties.
pub fn grid(rng: &mut ChaCha8Rng, n: usize, d: usize, span: i32) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-span..=span) as f32).collect()).collect()
}

/// Multiples of 1/64 in [-4, 4]: exact under scaling by 0.5 and by 3.
pub fn dyadic(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-256i32..=256) as f32 / 64.0).collect())
        .collect()
}

pub fn set(rows: &[Vec<f32>]) -> FeatureSet {
    FeatureSet::from_rows(rows).unwrap()
}

pub fn line(values: &[f32]) -> FeatureSet {
    FeatureSet::from_matrix(values.to_vec(), 1, "").unwrap()
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
