//! Bayesian mixture model for ordinal predictors whose effect is either
//! linear in the levels or a step at an unknown cutoff.

pub mod cli;
pub mod design;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod oracle;
pub mod priors;
pub mod sampler;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
