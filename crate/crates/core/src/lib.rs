//! Compound-decision shrinkage estimation for the Gaussian sequence problem.
//!
//! Given independent observations `X_i ~ N(theta_i, sigma^2)` with known noise
//! scale, this crate estimates the mean vector by fitting a single univariate
//! decision rule `d` applied to every coordinate. Rules are selected by
//! minimizing observable risk estimates (Stein's unbiased risk estimate and a
//! kernel-smoothed biased variant) over shape-constrained function classes:
//! monotone piecewise-linear rules with a total-variation cap on the
//! derivative, monotone step rules, and step rules with a total-variation cap
//! on the rule itself.
//!
//! The crate also ships the oracle separable rule (the best possible `d` when
//! the means are known), two empirical-Bayes baselines (Tweedie with a
//! Gaussian KDE and an NPMLE prior fitted by EM), a seeded simulation harness
//! that produces the benchmark tables, and a count-data denoising pipeline
//! built on the Anscombe transform.
//!
//! Entry points:
//! - [`SampleSet`] / [`TruthVector`]: inputs.
//! - [`estimators`]: all fitted rules ([`estimators::fit_constrained_pwl`],
//!   [`estimators::fit_monotone_pwc`], [`estimators::fit_linear_sure`], ...).
//! - [`risk`]: risk estimates ([`risk::sure`], [`risk::biased_sure`]).
//! - [`bench`]: scenario tables and regret curves.
//! - [`denoise`]: expression-matrix denoising.

pub mod bench;
pub mod denoise;
pub mod density;
pub mod estimators;
pub mod oracle;
pub mod risk;
pub mod rngutil;
pub mod rules;
pub mod sample;
pub mod solvers;

pub use rules::{FitReport, LinearRule, PwlRule, Rule, SeparableRule, StepRule};
pub use sample::{SampleSet, TruthVector};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
