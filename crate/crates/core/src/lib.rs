//! Density regression with normalized compound random measures.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod config;
pub mod cv;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod geweke;
pub mod kernel;
pub mod levy;
pub mod parallel;
pub mod predictive;
pub mod prior;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod special;
pub mod validation;

pub use error::{Error, Result};
pub use levy::{LevyFamily, LevySpec};
pub use score::{Location, ScoreModel, ScoreParams};
