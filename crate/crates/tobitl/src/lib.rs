//! Two-stage L-estimation for Tobit (left-censored) regression with one
//! endogenous regressor.
//!
//! Pipeline: a least-squares first stage regresses the endogenous variable
//! on the instrument design and keeps the residuals as a control function;
//! the second stage fits censored quantile regressions on the augmented
//! design over a τ-grid; the coefficient process is integrated against a
//! weight measure (trimmed, Winsorized, parabolic, point-mass, smoothed
//! quantile) into an L-estimate. Inference runs through plug-in Jacobians,
//! per-observation influence terms, and a Bartlett-kernel HAC long-run
//! covariance. A Monte Carlo engine and a bootstrap RMSE assessment cover
//! finite-sample evaluation.

pub mod bootstrap;
pub mod cqr;
pub mod error;
pub mod first_stage;
pub mod inference;
pub mod lweights;
pub mod model;
pub mod pipeline;
pub mod simulate;

pub use error::{Error, ErrorCategory, Result};
