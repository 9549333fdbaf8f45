//! Semi-supervised text regression: ensemble training with fold and seed
//! fan-out, confidence-filtered pseudo-labeling, and retraining on the
//! expanded set, plus the correlation metrics used to evaluate it.

pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pseudolabel;
pub mod synth;

pub use error::{Error, Result};
