//! Matérn correlation numerics.
//!
//! * [`special_functions`]: `K_nu`, the power and constant factors.
//! * [`kernel`]: parametrizations, point evaluation, closed forms, spectral density.
//! * [`covariance`]: distances, correlation/covariance matrices, jittered Cholesky, sampling, surfaces.
//! * [`conditional_joint`]: a valid joint covariance for two coupled processes.
//! * [`analysis`]: swap tables, MSE band, KL probes, likelihood ridge and MLE.

pub mod analysis;
pub mod conditional_joint;
pub mod covariance;
pub mod error;
pub mod export;
pub mod kernel;
pub mod special_functions;

pub use error::{MaternError, Result};
pub use kernel::{MaternParams, Parametrization};
