//! Studies built on top of the per-sample metrics.

mod histogram;
mod ranking;
mod spearman;
mod study;
mod top_p;
mod union;

pub use histogram::{histogram, Bin, HistogramSpec};
pub use ranking::{middle_pool, nnd_ranking, slices, RankedSample, Slices, MIDDLE_POOL};
pub use spearman::{average_ranks, spearman};
pub use study::{rank_correlation_study, study_from_reports, RankCorrelationStudy};
pub use top_p::{default_p_grid, mean_top_p, TopPRow, TopPStudy};
pub use union::{union_compare, UnionComparison, LABEL_A, LABEL_B};
