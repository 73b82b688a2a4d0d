use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::FeatureSet;
use crate::knn::{nnd, DistanceConfig};
use crate::metrics::cmp_ids;

/// Width of the pool the middle slice is drawn from.
pub const MIDDLE_POOL: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSample {
    pub rank: usize,
    pub sample_id: String,
    pub value: f64,
}

/// Samples ordered by nearest-neighbor distance, ascending (ties by id).
pub fn nnd_ranking(reals: &FeatureSet, cfg: &DistanceConfig) -> Result<Vec<RankedSample>> {
    let d = nnd(reals.clone(), cfg)?;
    let mut order: Vec<usize> = (0..reals.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then_with(|| cmp_ids(reals.id(a), reals.id(b))));
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| RankedSample {
            rank,
            sample_id: reals.id(i).to_owned(),
            value: d[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slices {
    pub head: Vec<RankedSample>,
    pub middle: Vec<RankedSample>,
    /// Highest ranks, largest value first.
    pub tail: Vec<RankedSample>,
}

/// Ranks `[lo, hi)` the middle slice is drawn from.
///
/// Nominally the `MIDDLE_POOL` ranks centered on N/2, trimmed so that it does
/// not overlap the head and tail slices. When trimming leaves nothing, the
/// untrimmed centered window is used instead.
pub fn middle_pool(n: usize, head: usize, tail: usize) -> (usize, usize) {
    let half = MIDDLE_POOL / 2;
    let centered = ((n / 2).saturating_sub(half), (n / 2 + half).min(n));
    let lo = centered.0.max(head.min(n));
    let hi = centered.1.min(n.saturating_sub(tail));
    if lo < hi {
        (lo, hi)
    } else {
        centered
    }
}

/// Lowest `count`, a seeded draw of `count` from the middle pool, and the
/// highest `count` entries of a ranking.
pub fn slices(ranking: &[RankedSample], count: usize, seed: u64) -> Slices {
    let n = ranking.len();
    let head_n = count.min(n);
    let tail_n = count.min(n);
    let (lo, hi) = middle_pool(n, head_n, tail_n);
    let pool = hi - lo;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, pool, count.min(pool)).into_vec();
    picks.sort_unstable();
    Slices {
        head: ranking[..head_n].to_vec(),
        middle: picks.into_iter().map(|p| ranking[lo + p].clone()).collect(),
        tail: ranking[n - tail_n..].iter().rev().cloned().collect(),
    }
}
