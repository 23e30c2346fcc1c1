//! Label-shift semi-supervised learning with doubly robust estimation of
//! the unlabeled class distribution.
//!
//! The crate covers synthetic long-tailed data generation, likelihood and
//! EM training of a classifier together with the label missingness
//! mechanism, the outcome-regression / inverse-propensity / doubly robust
//! estimators of the class prior, the two-stage training procedure built on
//! them, and a Monte Carlo harness that checks the estimators' asymptotics.

pub mod data;
pub mod distribution;
pub mod error;
pub mod estimate;
pub mod mc;
pub mod model;
pub mod report;
pub mod rng;
pub mod synth;
pub mod train;
mod par;

pub use data::{Dataset, Observation, Truth};
pub use distribution::{
    project_to_simplex, recover_unlabeled_prior, top1_accuracy, tv_distance, ClassDistribution,
    MissingnessMechanism,
};
pub use error::{Error, Result};
