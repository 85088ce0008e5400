//! Debiased sequential recommendation.
//!
//! The crate is organised around the pipeline an experiment walks through:
//!
//! * [`data`]: raw log ingestion, k-core filtering, leave-one-out splits,
//!   propensities and popularity statistics.
//! * [`nn`]: parameter storage, shared item embeddings and the three
//!   sequence backbones (GRU, dilated causal convolutions, causal
//!   self-attention).
//! * [`model`]: the disentangled counterfactual model, its ablation variants
//!   and the baseline recommenders, plus counterfactual inference.
//! * [`loss`]: the point-wise and pair-wise training objectives.
//! * [`eval`]: sampled-negative ranking metrics with inverse propensity
//!   reweighting, exposure analysis and significance testing.
//! * [`train`]: batching, the multi-task training loop and early stopping.
//! * [`experiment`]: experiment specs, grid sweeps, reports and plots.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};

/// Version stamp written into reports and checkpoints.
pub const VERSION: &str = concat!("dcrec-", env!("CARGO_PKG_VERSION"));
