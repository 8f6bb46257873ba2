//! Conjugate-norm out-of-distribution scoring on exported features.

pub mod baselines;
pub mod cli;
pub mod config;
pub mod data;
pub mod density;
pub mod error;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod search;
pub mod synth;

pub use data::FeatureMatrix;
pub use error::{OodError, Result};
