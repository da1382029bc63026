//! Separable decision rules: evaluable univariate functions with an a.e.
//! derivative and an explicit jump list.
//!
//! Conventions shared by every rule type:
//! - step rules are right-continuous at their knots, so evaluation at an
//!   observed data point is unambiguous;
//! - at a piecewise-linear knot the derivative is the right derivative.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A univariate decision rule `d(x)` applied coordinatewise.
pub trait SeparableRule {
    /// Exact value of the piecewise formula at `x` (assumed finite).
    fn evaluate(&self, x: f64) -> f64;

    /// Almost-everywhere derivative; right derivative at knots.
    fn derivative(&self, x: f64) -> f64;

    /// Jump discontinuities as `(location, size)` pairs, sizes nonzero,
    /// locations strictly increasing.
    fn jumps(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }
}

/// Checked evaluation; rejects non-finite `x`.
pub fn evaluate_rule<R: SeparableRule + ?Sized>(rule: &R, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("evaluation point"));
    }
    Ok(rule.evaluate(x))
}

/// Checked a.e. derivative; rejects non-finite `x`.
pub fn rule_derivative<R: SeparableRule + ?Sized>(rule: &R, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("evaluation point"));
    }
    Ok(rule.derivative(x))
}

/// `d(x) = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRule {
    pub a: f64,
    pub b: f64,
}

impl LinearRule {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    /// The identity rule `d(x) = x` (the no-shrinkage baseline).
    pub fn identity() -> Self {
        Self { a: 0.0, b: 1.0 }
    }
}

impl SeparableRule for LinearRule {
    fn evaluate(&self, x: f64) -> f64 {
        self.a + self.b * x
    }

    fn derivative(&self, _x: f64) -> f64 {
        self.b
    }
}

/// Piecewise-constant rule with strictly increasing knots `t_1 < .. < t_m`
/// and levels `v_0..v_m`; the value on `[t_k, t_{k+1})` is `v_k`
/// (right-continuous at every knot).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    knots: Vec<f64>,
    levels: Vec<f64>,
    monotone: bool,
}

impl StepRule {
    pub fn new(knots: Vec<f64>, levels: Vec<f64>, monotone: bool) -> Result<Self> {
        if levels.len() != knots.len() + 1 {
            return Err(Error::LengthMismatch { expected: knots.len() + 1, got: levels.len() });
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("step knots must be strictly increasing".into()));
        }
        if knots.iter().chain(levels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("step rule parameters"));
        }
        if monotone && levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("monotone step rule has decreasing levels".into()));
        }
        Ok(Self { knots, levels, monotone })
    }

    /// A constant rule (no knots).
    pub fn constant(level: f64) -> Self {
        Self { knots: Vec::new(), levels: vec![level], monotone: true }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Total variation of the rule: sum of absolute jumps.
    pub fn total_variation(&self) -> f64 {
        self.levels.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

impl SeparableRule for StepRule {
    fn evaluate(&self, x: f64) -> f64 {
        // partition_point gives the number of knots <= x, which indexes the
        // right-continuous level.
        let idx = self.knots.partition_point(|&t| t <= x);
        self.levels[idx]
    }

    fn derivative(&self, _x: f64) -> f64 {
        0.0
    }

    fn jumps(&self) -> Vec<(f64, f64)> {
        self.knots
            .iter()
            .zip(self.levels.windows(2))
            .filter(|(_, w)| w[1] != w[0])
            .map(|(&t, w)| (t, w[1] - w[0]))
            .collect()
    }
}

/// Continuous piecewise-linear rule in the truncated-line basis:
/// `d(x) = beta0 + sum_j beta_j (x - x_j)_+` with `sum_j beta_j = 0`, so the
/// rule saturates (slope zero) outside the knot span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlRule {
    beta0: f64,
    knots: Vec<f64>,
    betas: Vec<f64>,
    /// Cap on `sum_j |beta_j|` this rule was fitted under.
    tau: f64,
}

impl PwlRule {
    /// `tol` bounds how far `sum beta_j` may sit from zero (solver output is
    /// only saturated up to its residual tolerance).
    pub fn new(beta0: f64, knots: Vec<f64>, betas: Vec<f64>, tau: f64, tol: f64) -> Result<Self> {
        if betas.len() != knots.len() {
            return Err(Error::LengthMismatch { expected: knots.len(), got: betas.len() });
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("pwl knots must be strictly increasing".into()));
        }
        if !beta0.is_finite() || knots.iter().chain(betas.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pwl rule parameters"));
        }
        let s: f64 = betas.iter().sum();
        if s.abs() > tol {
            return Err(Error::InvalidInput(format!(
                "pwl coefficients must sum to zero (saturation); got {s:e}"
            )));
        }
        Ok(Self { beta0, knots, betas, tau })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Total variation of the derivative: `sum_j |beta_j|`.
    pub fn derivative_tv(&self) -> f64 {
        self.betas.iter().map(|b| b.abs()).sum()
    }

    /// True when every partial sum of coefficients is `>= -tol`, i.e. the
    /// rule is non-decreasing up to solver tolerance.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let mut acc = 0.0;
        self.betas.iter().all(|&b| {
            acc += b;
            acc >= -tol
        })
    }
}

impl SeparableRule for PwlRule {
    fn evaluate(&self, x: f64) -> f64 {
        let mut v = self.beta0;
        for (&t, &b) in self.knots.iter().zip(&self.betas) {
            if x > t {
                v += b * (x - t);
            } else {
                break; // knots increasing: no later basis function is active
            }
        }
        v
    }

    fn derivative(&self, x: f64) -> f64 {
        // Right derivative: the basis (x - t)_+ has right slope 1 at x = t.
        let mut s = 0.0;
        for (&t, &b) in self.knots.iter().zip(&self.betas) {
            if x >= t {
                s += b;
            } else {
                break;
            }
        }
        s
    }
}

/// Rule tabulated on a dense grid, linearly interpolated, with exact values
/// stored for selected points (used by the Tweedie/KDE baseline, which has no
/// closed parametric form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedRule {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Exact `(x, d(x), d'(x))` triples at caller-designated points,
    /// consulted before interpolation.
    exact: Vec<(f64, f64, f64)>,
}

impl TabulatedRule {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, mut exact: Vec<(f64, f64, f64)>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch { expected: xs.len(), got: ys.len() });
        }
        if xs.len() < 2 {
            return Err(Error::InvalidInput("tabulated rule needs at least two grid points".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("tabulation grid must be strictly increasing".into()));
        }
        exact.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        exact.dedup_by(|a, b| a.0 == b.0);
        Ok(Self { xs, ys, exact })
    }

    pub fn grid(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    fn exact_at(&self, x: f64) -> Option<&(f64, f64, f64)> {
        self.exact
            .binary_search_by(|probe| probe.0.partial_cmp(&x).unwrap())
            .ok()
            .map(|i| &self.exact[i])
    }
}

impl SeparableRule for TabulatedRule {
    fn evaluate(&self, x: f64) -> f64 {
        if let Some(&(_, v, _)) = self.exact_at(x) {
            return v;
        }
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let j = self.xs.partition_point(|&g| g <= x);
        let (x0, x1) = (self.xs[j - 1], self.xs[j]);
        let t = (x - x0) / (x1 - x0);
        self.ys[j - 1] + t * (self.ys[j] - self.ys[j - 1])
    }

    fn derivative(&self, x: f64) -> f64 {
        if let Some(&(_, _, d)) = self.exact_at(x) {
            return d;
        }
        let n = self.xs.len();
        if x < self.xs[0] || x > self.xs[n - 1] {
            return 0.0;
        }
        let j = self.xs.partition_point(|&g| g <= x).clamp(1, n - 1);
        (self.ys[j] - self.ys[j - 1]) / (self.xs[j] - self.xs[j - 1])
    }
}

/// Posterior-mean rule for a discrete prior on `grid` with weights `weights`
/// under Gaussian noise of scale `sigma` (the NPMLE baseline's output).
///
/// Per-component likelihoods are floored at `density_floor` before
/// normalization, matching the fitting procedure, so the rule degrades the
/// same way the fit does when every component underflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMeanRule {
    grid: Vec<f64>,
    weights: Vec<f64>,
    sigma: f64,
    density_floor: f64,
}

impl PosteriorMeanRule {
    pub fn new(grid: Vec<f64>, weights: Vec<f64>, sigma: f64, density_floor: f64) -> Result<Self> {
        if grid.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: weights.len() });
        }
        if grid.is_empty() {
            return Err(Error::InvalidInput("posterior rule needs a nonempty grid".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        Ok(Self { grid, weights, sigma, density_floor })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Censored posterior weights at `x`: softmax of
    /// `max(log pi_j + log phi_sigma(x - u_j), log floor)`.
    pub fn posterior_weights(&self, x: f64) -> Vec<f64> {
        let log_floor = self.density_floor.ln();
        let s2 = self.sigma * self.sigma;
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        let mut logs: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.weights)
            .map(|(&u, &pi)| {
                let z = x - u;
                let lp = if pi > 0.0 { pi.ln() } else { f64::NEG_INFINITY };
                (lp + log_norm - 0.5 * z * z / s2).max(log_floor)
            })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = (*l - m).exp();
            total += *l;
        }
        for l in logs.iter_mut() {
            *l /= total;
        }
        logs
    }
}

impl SeparableRule for PosteriorMeanRule {
    fn evaluate(&self, x: f64) -> f64 {
        let w = self.posterior_weights(x);
        w.iter().zip(&self.grid).map(|(&wi, &u)| wi * u).sum()
    }

    fn derivative(&self, x: f64) -> f64 {
        // d'(x) = posterior variance / sigma^2 (Tweedie identity).
        let w = self.posterior_weights(x);
        let mean: f64 = w.iter().zip(&self.grid).map(|(&wi, &u)| wi * u).sum();
        let var: f64 = w
            .iter()
            .zip(&self.grid)
            .map(|(&wi, &u)| wi * (u - mean) * (u - mean))
            .sum();
        var / (self.sigma * self.sigma)
    }
}

/// Serializable rule container for reports and the JSON interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    Linear(LinearRule),
    Step(StepRule),
    Pwl(PwlRule),
    Tabulated(TabulatedRule),
    Posterior(PosteriorMeanRule),
}

impl SeparableRule for Rule {
    fn evaluate(&self, x: f64) -> f64 {
        match self {
            Rule::Linear(r) => r.evaluate(x),
            Rule::Step(r) => r.evaluate(x),
            Rule::Pwl(r) => r.evaluate(x),
            Rule::Tabulated(r) => r.evaluate(x),
            Rule::Posterior(r) => r.evaluate(x),
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Rule::Linear(r) => r.derivative(x),
            Rule::Step(r) => r.derivative(x),
            Rule::Pwl(r) => r.derivative(x),
            Rule::Tabulated(r) => r.derivative(x),
            Rule::Posterior(r) => r.derivative(x),
        }
    }

    fn jumps(&self) -> Vec<(f64, f64)> {
        match self {
            Rule::Step(r) => r.jumps(),
            _ => Vec::new(),
        }
    }
}

/// Solver diagnostics attached to every fit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn converged(iterations: usize) -> Self {
        Self { iterations, converged: true, ..Default::default() }
    }
}

/// A fitted rule plus its hyperparameters, diagnostics, and achieved risk
/// estimate. Returned even when the solver flags non-convergence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub rule: Rule,
    pub hyperparams: BTreeMap<String, f64>,
    pub risk_estimate: f64,
    pub diagnostics: Diagnostics,
}

impl FitReport {
    pub fn new(rule: Rule, risk_estimate: f64, diagnostics: Diagnostics) -> Self {
        Self { rule, hyperparams: BTreeMap::new(), risk_estimate, diagnostics }
    }

    pub fn with_hyperparam(mut self, name: &str, value: f64) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }
}
