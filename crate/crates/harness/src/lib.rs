//! Experiment driver: TOML manifests in, metrics, checkpoints, GAE audit
//! logs and comparison tables out.

pub mod config;
mod error;
pub mod report;
pub mod run;

pub use error::{HarnessError, Result};
