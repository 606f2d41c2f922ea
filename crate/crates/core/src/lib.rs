//! Imputation of missing values by regularized Gaussian conditional means.
//!
//! Means and covariances are estimated directly from incomplete data with a
//! pairwise maximum-likelihood estimator ([`dper`]), and each missing entry is
//! replaced by its conditional mean given a selected subset of the observed
//! features ([`dimv`]).

pub mod data;
pub mod dimv;
pub mod dper;
pub mod error;
pub mod evaluation;
pub mod io;
mod linalg;
pub mod missing;
pub mod stats;
pub mod tuner;

pub use data::{MaskedMatrix, MissingPattern, Standardizer};
pub use dimv::{impute, DimvModel, ImputationConfig, ImputationResult};
pub use dper::{dper_fit, CovarianceEstimator, CovarianceMatrix, MeanVector};
pub use error::{Error, Result};
pub use missing::{MaskSpec, MissingMask};
pub use tuner::{tune_alpha, AlphaGrid, TuningOutcome};
