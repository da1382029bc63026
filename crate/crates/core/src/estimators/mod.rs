//! Fitted decision rules: the linear unbiased-risk minimizer, the
//! constrained piecewise-linear minimizer with three ways of picking its
//! total-variation budget, the monotone piecewise-constant rule, its
//! TV-budget variant, and the two empirical-Bayes baselines.

mod bg;
mod linear;
mod npmle;
mod pwc;
mod pwl;
mod tau;

pub use bg::fit_bg;
pub use linear::fit_linear_sure;
pub use npmle::{fit_jz_npmle, NpmleConfig};
pub use pwc::{fit_monotone_pwc, fit_tv_pwc, DensityPath, PwcFitConfig, PwcKnotStrategy};
pub use pwl::{fit_constrained_pwl, pwl_knots, PwlFitConfig};
pub use tau::{tau_cv, tau_cv_with, tau_plugin, tau_upper_bound, TauSelector};

use crate::rules::SeparableRule;
use crate::sample::SampleSet;

/// Knot placement strategies for the piecewise-linear fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnotStrategy {
    /// `m` evenly spaced knots strictly inside `(min X, max X)`.
    Regular(usize),
    /// A knot at every distinct observation.
    OrderStatistics,
    /// Knots at the 1st..99th empirical percentiles.
    Percentiles,
}

impl Default for KnotStrategy {
    fn default() -> Self {
        KnotStrategy::Regular(30)
    }
}

/// Range-inflation constant: `b_n = (K sigma^2 ln n)^{1/2}` with `K = 3` for
/// the derivative-TV class.
pub fn bn_pwl(sample: &SampleSet) -> f64 {
    (3.0 * sample.sigma2() * (sample.len() as f64).ln()).sqrt()
}

/// `b_n` for the TV-of-rule class, `K = 8/3`.
pub fn bn_tv(sample: &SampleSet) -> f64 {
    ((8.0 / 3.0) * sample.sigma2() * (sample.len() as f64).ln()).sqrt()
}

/// Evaluate a rule over points.
pub fn predict<R: SeparableRule + ?Sized>(rule: &R, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| rule.evaluate(x)).collect()
}

/// Evaluate a rule at the observations and clip into `[min X, max X]`
/// (the fitted classes saturate there; clipping makes it an invariant).
pub fn predict_clipped<R: SeparableRule + ?Sized>(rule: &R, sample: &SampleSet) -> Vec<f64> {
    let (lo, hi) = (sample.min(), sample.max());
    sample.values().iter().map(|&x| rule.evaluate(x).clamp(lo, hi)).collect()
}
