//! Bias-aware estimation and confidence intervals for a single regression
//! coefficient under a user-specified bound Pen(γ) ≤ C on the coefficients
//! of the restricted controls.
//!
//! The estimator family comes from a regularized propensity-score regression
//! of the regressor of interest on the controls: the residuals at penalty
//! level λ serve as instruments, and the resulting linear estimator exactly
//! trades worst-case bias against variance along the solution path. Fixed-
//! length confidence intervals widen the usual normal interval through a
//! bias-aware critical value, the 1−α quantile of |N(B, 1)|.
//!
//! Modules:
//! * [`model`] — datasets, penalties, dual norms, canonicalization;
//! * [`pathsolver`] — ridge/ℓ1/generic solution paths and the modulus of
//!   continuity;
//! * [`estimator`] — minimax linear weights, corner regressions, diagnostics;
//! * [`inference`] — critical values, FLCIs, penalty selection, the baseline
//!   estimation pipeline;
//! * [`efficiency`] — finite-sample efficiency constants κ*;
//! * [`diagnostics`] — choice-of-C tooling, lower CIs for C, the double-lasso
//!   comparator;
//! * [`simharness`] — seeded DGPs and Monte Carlo experiments;
//! * [`report`] — byte-stable JSON/CSV serialization.

pub mod diagnostics;
pub mod efficiency;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod pathsolver;
pub mod report;
pub mod simharness;
pub mod stats;

pub use error::{Error, Result};
