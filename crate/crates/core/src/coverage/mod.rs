//! Omniscient coverage instrumentation: visit tracking, cover-time rollouts,
//! first-passage sampling and the hierarchical cover-time bound.

mod bound;
mod oracle;
mod passage;
mod tracker;

pub use bound::{hierarchical_bound, traversal_level, BoundResult, Partition, QuantileTable};
pub use oracle::{exact_cover_oracle, CoverDistribution};
pub use passage::{
    cover_rollout, estimate_pairwise_quantiles, first_visit_rollout, sample_all_passages, sample_first_passage, PassageSample,
    Rollout, Start, WalkSetup,
};
pub use tracker::{cover_statistics, CoverageStats, VisitTracker};
