use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rarity_core::{knn_radii, DistanceConfig, FeatureSet};

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30_000);
    let d: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(512);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = (0..n * d).map(|_| rng.gen::<f32>()).collect();
    let set = FeatureSet::from_matrix(data, d, "bench").unwrap();
    let t = Instant::now();
    let idx = knn_radii(set, 3, &DistanceConfig::default()).unwrap();
    println!("{n}x{d}: {:.2?} (mean radius {:.4})", t.elapsed(), idx.radii().iter().sum::<f64>() / n as f64);
}
