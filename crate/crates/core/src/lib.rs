//! Guiding adversarial examples for classifiers trained on long-tailed data.
//!
//! Tail-class training points are pushed across the decision boundary with a
//! few steps of ℓ∞ PGD. Those that land in a more frequent class within `k`
//! steps are trained on with their original label, pulling the biased
//! boundary back towards the head classes.
//!
//! * [`autodiff`] – reverse-mode differentiation on a tape
//! * [`model`] – MLP classifiers, softmax outputs, margins, checkpoints
//! * [`data`] – long-tail construction and dataset ingestion
//! * [`attack`] – PGD with margin traces
//! * [`gae`] – class partition and GAE selection
//! * [`train`] – cross-entropy baseline and guided training

pub mod attack;
pub mod autodiff;
pub mod data;
mod error;
pub mod gae;
pub mod metrics;
pub mod model;
pub mod train;

pub use error::{Error, Result};
