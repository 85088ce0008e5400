//! Sampled-negative ranking evaluation with inverse propensity reweighting.
//!
//! Every held-out positive is ranked against 100 sampled negatives. A case
//! with its positive at rank `r` scores `NDCG = 1 / log2(r + 1)` and `HR = 1`
//! when `r <= K`, zero otherwise. Case metrics are averaged with weights
//! `w = 1 / θ+` of the positive item, normalised by `Σ w`.

mod disentangle;
mod exposure;
mod metrics;
mod negatives;
mod protocol;
mod report;
mod significance;

pub use disentangle::{disentanglement, Disentanglement};
pub use exposure::{exposure_analysis, exposure_shares, top_k, ExposureReport};
pub use metrics::{rank_metrics, rank_of, sort_candidates, weighted_mean};
pub use negatives::sample_negatives;
pub use protocol::{
    evaluate_c_grid, evaluate_cases, positive_ranks, test_cases, validation_cases, EvalCase, EvalProtocol, MetricPoint,
    Reweighting,
};
pub use report::EvalReport;
pub use significance::welch_one_tailed;
