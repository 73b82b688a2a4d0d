//! Per-sample rarity scores and k-NN manifold metrics for generated samples.
//!
//! Everything operates on precomputed embeddings ([`FeatureSet`]). A real
//! set is turned into a [`ManifoldIndex`] (one k-NN sphere per sample) and
//! generated samples are scored against it.

pub mod analysis;
pub mod cache;
pub mod error;
pub mod features;
mod kernel;
pub mod knn;
pub mod metrics;
pub mod npy;
pub mod report;
pub mod svg;
pub mod workflow;

pub use error::{Error, Result};
pub use features::{load_features, save_features, subsample, DatasetManifest, FeatureSet};
pub use knn::{knn_radii, membership, nnd, pairwise_sq_dists, DistanceConfig, ManifoldIndex};
pub use metrics::{MetricSummary, RarityReport, RealismReport};
