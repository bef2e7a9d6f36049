//! Datasets: long-tail construction, IDX/CSV ingestion, synthetic mixtures.

mod csv;
mod dataset;
pub mod idx;
mod longtail;
mod split;
mod synth;

pub use self::csv::{load_csv, write_csv};
pub use dataset::Dataset;
pub use idx::load_idx;
pub use longtail::{build_longtail, LongTailDataset, LongTailSpec};
pub use split::{stratified_split, TestSize};
pub use synth::{synth_gaussians, GaussianMixture, CIRCLE_RADIUS, CIRCLE_STD};
