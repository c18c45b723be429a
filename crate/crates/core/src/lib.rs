//! Time series cluster kernels for multivariate time series with missing data.
//!
//! The crate provides the baseline Gaussian-mixture kernel (TCK), the
//! informative-missingness kernel built on mixed Gaussian/Bernoulli mixtures
//! (TCK_IM), supervised and semi-supervised posterior transforms, synthetic
//! data generators and a KPCA + kNN evaluation pipeline.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod mixture;
pub mod synth;
pub mod transform;

pub use error::{Result, TckError};
