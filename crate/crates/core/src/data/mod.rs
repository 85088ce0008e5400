//! Interaction logs: ingestion, filtering, splits and popularity statistics.

mod dataset;
mod io;
mod propensity;
mod raw;
mod stats;
pub mod synthetic;

pub use dataset::{preprocess, preprocess_with, CoreMode, FitView, InteractionDataset, PreprocessConfig, UserSplit};
pub use io::{load_dataset, load_propensities, save_dataset, save_propensities, DATASET_SCHEMA_VERSION};
pub use propensity::{compute_propensities, PropensityParams, PropensityTable};
pub use raw::{load_raw, parse_raw, RawFormat, RawInteraction};
pub use stats::{gini_index, popularity_buckets, Buckets};

/// Item index inside a dataset (dense, `0..num_items`).
pub type ItemIdx = u32;
/// User index inside a dataset (dense, `0..num_users`).
pub type UserIdx = u32;
