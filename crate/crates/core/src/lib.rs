//! Generalized functional linear regression with error-prone covariates.

pub mod bootstrap;
pub mod bspline;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod fungrid;
pub mod glm;
pub mod goldens;
pub mod gp;
pub mod linalg;
pub mod mecov;
pub mod montecarlo;
pub mod pipeline;
pub mod presets;
pub mod rc;
pub mod rng;
pub mod simex;

pub use error::{Error, Result};
