//! Estimation of Gibbs and plugin generalization errors for quasi-Bayesian
//! procedures under arbitrary loss functions.
//!
//! The central quantity is the posterior covariance between a loss and the
//! score of each observation: averaged over observations it is the bias
//! correction that turns an empirical error into a generalization error
//! estimate, and per observation it is a measure of local influence. Both
//! are computed from a single run of posterior simulation; no refitting,
//! importance sampling, or information matrices are required.
//!
//! Everything is driven by an [`core::EvalMatrix`]: the n x M matrices of
//! per-observation, per-draw loss and score values. Build one with
//! [`core::build_eval_matrix`] from a dataset and posterior draws, then feed
//! it to the estimators:
//!
//! ```
//! use pcic::core::EvalMatrix;
//! use pcic::estimators;
//!
//! let em = EvalMatrix::from_rows(
//!     vec![vec![1.0, 3.0]],  // loss values, one row per observation
//!     vec![vec![2.0, 4.0]],  // score values
//! ).unwrap();
//! let report = estimators::pcic_gibbs(&em).unwrap();
//! assert_eq!(report.pcic_gibbs, 1.0);
//! ```
//!
//! The [`models`] module provides quasi-posterior samplers and the analytic
//! oracles of the conjugate location-shift model used to validate the
//! estimators; [`sensitivity`] implements weighted-posterior reweighting and
//! local influence diagnostics; [`cli`] backs the `pcic` command-line tool.

#![forbid(unsafe_code)]

pub mod cli;
pub mod core;
pub mod error;
pub mod estimators;
pub mod losses;
pub mod models;
pub mod sensitivity;

pub use error::{Error, Result};
