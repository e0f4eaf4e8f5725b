//! Multiple hypothesis testing with covariates.
//!
//! Each hypothesis carries a p-value and a feature vector. The [`trainer`]
//! learns a feature-dependent threshold `t(x)` with a small network and keeps
//! the false discovery proportion in check with a mirror estimate inside
//! cross-fitting; [`baselines`] has BH, Storey-BH and a grouped procedure for
//! comparison, and [`simgen`] produces labelled synthetic data.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod folds;
pub mod io;
mod kernel;
pub mod kmeans;
pub mod mixture;
pub mod mlp;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod rule;
pub mod simgen;
pub mod trainer;

pub use error::{Error, Result};
