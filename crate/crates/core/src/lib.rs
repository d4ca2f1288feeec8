//! Pairwise regularized estimation of multivariate Gaussian convolution processes.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod covariance;
pub mod data;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod orchestrator;
pub mod predict;
pub mod simulate;

pub use error::{Error, Result};
