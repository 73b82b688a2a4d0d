//! On-disk cache of k-NN radii next to a feature file.
//!
//! `x.npy` with k = 3 caches to `x.radii.k3.npy` (an `'<f4'` vector of the
//! radii) and `x.radii.k3.json`, which records the SHA-256 of the feature
//! file, k, the row count, the subsample that produced the indexed rows, and
//! each row's k-th neighbor. Loading rebuilds the index from the neighbor
//! list, so a cached index is bit-identical to a fresh one; the `'<f4'`
//! vector exists for external tools.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::knn::{knn_radii, DistanceConfig, ManifoldIndex};
use crate::npy;
use crate::report::write_atomic;

/// Which rows of the feature file were indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub feature_sha256: String,
    pub k: usize,
    pub n_rows: usize,
    pub subsample: Option<SubsampleSpec>,
    pub kth_neighbor: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    /// No usable cache; radii were computed and written.
    Rebuilt,
}

pub fn radii_cache_path(feature_path: &Path, k: usize) -> PathBuf {
    feature_path.with_extension(format!("radii.k{k}.npy"))
}

pub fn radii_meta_path(feature_path: &Path, k: usize) -> PathBuf {
    feature_path.with_extension(format!("radii.k{k}.json"))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Load the cached index if it matches the feature file, `k`, the row count
/// and the subsample; `None` when missing or stale.
pub fn load_cached(
    feature_path: &Path,
    features: Arc<FeatureSet>,
    k: usize,
    subsample: Option<SubsampleSpec>,
) -> Result<Option<ManifoldIndex>> {
    let meta_path = radii_meta_path(feature_path, k);
    let radii_path = radii_cache_path(feature_path, k);
    if !meta_path.exists() || !radii_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let Ok(meta) = serde_json::from_str::<CacheMeta>(&text) else {
        return Ok(None);
    };
    if meta.k != k
        || meta.n_rows != features.len()
        || meta.subsample != subsample
        || meta.kth_neighbor.len() != features.len()
        || meta.feature_sha256 != file_sha256(feature_path)?
    {
        return Ok(None);
    }
    match ManifoldIndex::from_neighbors(features, k, meta.kth_neighbor) {
        Ok(index) => Ok(Some(index)),
        Err(Error::Argument(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Write the radii vector and its metadata sidecar.
pub fn store(
    feature_path: &Path,
    index: &ManifoldIndex,
    subsample: Option<SubsampleSpec>,
) -> Result<()> {
    let radii: Vec<f32> = index.radii().iter().map(|&r| r as f32).collect();
    let meta = CacheMeta {
        feature_sha256: file_sha256(feature_path)?,
        k: index.k(),
        n_rows: index.len(),
        subsample,
        kth_neighbor: index.kth_neighbors().to_vec(),
    };
    write_atomic(
        &radii_cache_path(feature_path, index.k()),
        &npy::encode_f32(&[radii.len()], &radii),
    )?;
    let text = serde_json::to_string(&meta)? + "\n";
    write_atomic(&radii_meta_path(feature_path, index.k()), text.as_bytes())
}

/// [`knn_radii`] through the cache beside `feature_path`.
pub fn cached_knn_radii(
    feature_path: &Path,
    features: Arc<FeatureSet>,
    k: usize,
    subsample: Option<SubsampleSpec>,
    cfg: &DistanceConfig,
) -> Result<(ManifoldIndex, CacheOutcome)> {
    if let Some(index) = load_cached(feature_path, features.clone(), k, subsample)? {
        return Ok((index.with_config(*cfg), CacheOutcome::Hit));
    }
    let index = knn_radii(features, k, cfg)?;
    store(feature_path, &index, subsample)?;
    Ok((index, CacheOutcome::Rebuilt))
}
