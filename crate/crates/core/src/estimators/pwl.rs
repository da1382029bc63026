//! The constrained piecewise-linear minimizer of the unbiased risk
//! estimate: truncated-line basis on fixed knots, slope coefficients split
//! into nonnegative parts, and a QP under saturation, monotonicity, and a
//! derivative-TV budget.

use super::tau::TauSelector;
use super::KnotStrategy;
use crate::density::quantile;
use crate::risk::sure;
use crate::rules::{Diagnostics, FitReport, PwlRule, Rule};
use crate::sample::SampleSet;
use crate::solvers::{qp_solve, Mat, QpProblem, QP_DEFAULT_MAX_ITER, QP_DEFAULT_TOL};
use crate::{Error, Result};

/// Configuration for [`fit_constrained_pwl`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwlFitConfig {
    pub knot_strategy: KnotStrategy,
    pub tau_selector: TauSelector,
    /// Seed for the cross-validation fold shuffle (ignored otherwise).
    pub seed: u64,
}

impl Default for PwlFitConfig {
    fn default() -> Self {
        Self { knot_strategy: KnotStrategy::default(), tau_selector: TauSelector::default(), seed: 0 }
    }
}

/// Knot positions for a strategy over this sample.
pub fn pwl_knots(sample: &SampleSet, strategy: KnotStrategy) -> Vec<f64> {
    let (lo, hi) = (sample.min(), sample.max());
    match strategy {
        KnotStrategy::Regular(m) => {
            if hi <= lo || m == 0 {
                return Vec::new();
            }
            let span = hi - lo;
            (1..=m).map(|j| lo + j as f64 * span / (m + 1) as f64).collect()
        }
        KnotStrategy::OrderStatistics => sample.merged_order_statistics().0,
        KnotStrategy::Percentiles => {
            let mut knots: Vec<f64> =
                (1..=99).map(|p| quantile(sample.values(), p as f64 / 100.0)).collect();
            knots.dedup();
            knots
        }
    }
}

/// Fit with fixed knots and a fixed budget; returns the rule and solver
/// diagnostics. Exposed within the crate so cross-validation can reuse the
/// path without re-selecting tau.
pub(super) fn fit_pwl_with_knots(
    sample: &SampleSet,
    knots: &[f64],
    tau: f64,
) -> Result<(PwlRule, Diagnostics)> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("tau must be nonnegative, got {tau}")));
    }
    let n = sample.len();
    let xs = sample.values();
    let m = knots.len();

    if m == 0 {
        // no interior structure possible: constant rule at the mean
        let rule = PwlRule::new(sample.mean(), Vec::new(), Vec::new(), tau, 1e-12)?;
        return Ok((rule, Diagnostics::converged(0)));
    }

    // design: column 0 is the intercept, then (x - knot_j)_+ and its negation
    let dim = 1 + 2 * m;
    let mut basis = vec![0.0_f64; n * m];
    for (i, &x) in xs.iter().enumerate() {
        for (j, &t) in knots.iter().enumerate() {
            basis[i * m + j] = (x - t).max(0.0);
        }
    }
    // counts c_j = #{X_i >= knot_j} for the derivative penalty
    let counts: Vec<f64> = knots
        .iter()
        .map(|&t| xs.iter().filter(|&&x| x >= t).count() as f64)
        .collect();

    // Q = 2 D'D over v = (beta0, p, m) with D = [1 | B | -B]
    let mut q = Mat::zeros(dim, dim);
    q[(0, 0)] = 2.0 * n as f64;
    let mut col_sums = vec![0.0_f64; m];
    for i in 0..n {
        for j in 0..m {
            col_sums[j] += basis[i * m + j];
        }
    }
    for j in 0..m {
        q[(0, 1 + j)] = 2.0 * col_sums[j];
        q[(1 + j, 0)] = 2.0 * col_sums[j];
        q[(0, 1 + m + j)] = -2.0 * col_sums[j];
        q[(1 + m + j, 0)] = -2.0 * col_sums[j];
    }
    for j in 0..m {
        for k in j..m {
            let mut s = 0.0;
            for i in 0..n {
                s += basis[i * m + j] * basis[i * m + k];
            }
            let v = 2.0 * s;
            q[(1 + j, 1 + k)] = v;
            q[(1 + k, 1 + j)] = v;
            q[(1 + m + j, 1 + m + k)] = v;
            q[(1 + m + k, 1 + m + j)] = v;
            q[(1 + j, 1 + m + k)] = -v;
            q[(1 + m + k, 1 + j)] = -v;
            q[(1 + k, 1 + m + j)] = -v;
            q[(1 + m + j, 1 + k)] = -v;
        }
    }

    let sum_x: f64 = xs.iter().sum();
    let mut lin = vec![0.0_f64; dim];
    lin[0] = -2.0 * sum_x;
    let two_sigma2 = 2.0 * sample.sigma2();
    for j in 0..m {
        let mut bx = 0.0;
        for i in 0..n {
            bx += basis[i * m + j] * xs[i];
        }
        lin[1 + j] = -2.0 * bx + two_sigma2 * counts[j];
        lin[1 + m + j] = 2.0 * bx - two_sigma2 * counts[j];
    }

    // saturation: sum_j (p_j - m_j) = 0
    let mut eq = Mat::zeros(1, dim);
    for j in 0..m {
        eq[(0, 1 + j)] = 1.0;
        eq[(0, 1 + m + j)] = -1.0;
    }

    // monotone partial sums, the TV budget, and nonnegativity of the split
    let n_in = (m - 1) + 1 + 2 * m;
    let mut g = Mat::zeros(n_in, dim);
    let mut g_rhs = vec![0.0; n_in];
    for k in 0..(m - 1) {
        for j in 0..=k {
            g[(k, 1 + j)] = -1.0;
            g[(k, 1 + m + j)] = 1.0;
        }
    }
    for j in 0..(2 * m) {
        g[(m - 1, 1 + j)] = 1.0;
    }
    g_rhs[m - 1] = tau;
    for j in 0..(2 * m) {
        g[(m + j, 1 + j)] = -1.0;
    }

    let problem = QpProblem::new(q, lin, Some((eq, vec![0.0])), Some((g, g_rhs)))?;
    let sol = qp_solve(&problem, QP_DEFAULT_TOL, QP_DEFAULT_MAX_ITER)?;

    let beta0 = sol.beta[0];
    let mut betas: Vec<f64> = (0..m).map(|j| sol.beta[1 + j] - sol.beta[1 + m + j]).collect();
    // saturation holds to solver tolerance; pin it exactly on the last
    // coefficient so evaluation is constant beyond the final knot
    let drift: f64 = betas.iter().sum();
    if let Some(last) = betas.last_mut() {
        *last -= drift;
    }
    let rule = PwlRule::new(beta0, knots.to_vec(), betas, tau, 1e-9)?;
    Ok((rule, sol.diagnostics))
}

/// Fit the constrained piecewise-linear rule, selecting the budget per the
/// configuration. The report carries the rule (unclipped); estimates should
/// go through [`super::predict_clipped`].
pub fn fit_constrained_pwl(sample: &SampleSet, config: &PwlFitConfig) -> Result<FitReport> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("piecewise-linear fit needs n >= 2".into()));
    }
    let knots = pwl_knots(sample, config.knot_strategy);
    let (tau, cv_folds) = match config.tau_selector {
        TauSelector::UpperBound => (super::tau_upper_bound(sample), None),
        TauSelector::Plugin => (super::tau_plugin(sample, None)?, None),
        TauSelector::Cv { k, grid_size } => (
            super::tau_cv_with(sample, k, grid_size, config.seed, config.knot_strategy)?,
            Some(k),
        ),
    };
    let (rule, diagnostics) = fit_pwl_with_knots(sample, &knots, tau)?;
    let risk = sure(&rule, sample)?.value;
    let mut report = FitReport::new(Rule::Pwl(rule), risk, diagnostics)
        .with_hyperparam("tau", tau)
        .with_hyperparam("knots", knots.len() as f64)
        .with_hyperparam("b_n", super::bn_pwl(sample));
    if let Some(k) = cv_folds {
        report = report.with_hyperparam("cv_folds", k as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::SeparableRule;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_budget_forces_constant_at_mean() {
        let s = SampleSet::new(vec![-1.0, 0.0, 2.0, 5.0], 1.0).unwrap();
        let knots = pwl_knots(&s, KnotStrategy::Regular(5));
        let (rule, diag) = fit_pwl_with_knots(&s, &knots, 0.0).unwrap();
        assert!(diag.converged);
        for x in [-3.0, 0.0, 1.0, 7.0] {
            assert_abs_diff_eq!(rule.evaluate(x), s.mean(), epsilon = 1e-6);
        }
    }

    #[test]
    fn symmetric_sample_gives_odd_rule() {
        let s = SampleSet::new(vec![-2.0, -1.0, -0.3, 0.3, 1.0, 2.0], 1.0).unwrap();
        let cfg = PwlFitConfig { tau_selector: TauSelector::UpperBound, ..Default::default() };
        let fit = fit_constrained_pwl(&s, &cfg).unwrap();
        for x in [0.25, 0.7, 1.4, 1.9] {
            let a = fit.rule.evaluate(x);
            let b = fit.rule.evaluate(-x);
            assert_abs_diff_eq!(a, -b, epsilon = 1e-4);
        }
    }

    #[test]
    fn fitted_rule_saturates_and_is_monotone() {
        let s = SampleSet::new(
            vec![-2.0, -1.5, -1.0, -0.2, 0.1, 0.4, 0.9, 1.3, 2.2, 2.8],
            1.0,
        )
        .unwrap();
        let cfg = PwlFitConfig { tau_selector: TauSelector::Plugin, ..Default::default() };
        let fit = fit_constrained_pwl(&s, &cfg).unwrap();
        let rule = match &fit.rule {
            Rule::Pwl(r) => r.clone(),
            other => panic!("expected pwl, got {other:?}"),
        };
        assert!(rule.is_monotone(1e-7));
        let sum: f64 = rule.betas().iter().sum();
        assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-12);
        let last = *rule.knots().last().unwrap();
        assert_abs_diff_eq!(rule.evaluate(last + 1.0), rule.evaluate(last + 100.0), epsilon = 1e-12);
        assert!(rule.derivative_tv() <= fit.hyperparams["tau"] + 1e-7);
    }

    #[test]
    fn knot_strategies_produce_expected_counts() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let s = SampleSet::new(xs, 1.0).unwrap();
        assert_eq!(pwl_knots(&s, KnotStrategy::Regular(30)).len(), 30);
        let knots = pwl_knots(&s, KnotStrategy::Percentiles);
        assert!(knots.len() <= 99);
        assert!(knots.windows(2).all(|w| w[0] < w[1]));
        let os = pwl_knots(&s, KnotStrategy::OrderStatistics);
        assert!(os.windows(2).all(|w| w[0] < w[1]));
        // degenerate sample has no regular knots
        let flat = SampleSet::new(vec![1.0, 1.0], 1.0).unwrap();
        assert!(pwl_knots(&flat, KnotStrategy::Regular(30)).is_empty());
    }

    /// Six observations, three knots: the solver must match a brute-force
    /// scan of the feasible coefficient simplex.
    #[test]
    fn toy_instance_matches_brute_force_grid() {
        let s = SampleSet::new(vec![-2.0, -1.2, -0.1, 0.4, 1.1, 2.3], 1.0).unwrap();
        let knots = vec![-1.0, 0.0, 1.0];
        let tau = 1.5;
        let (rule, diag) = fit_pwl_with_knots(&s, &knots, tau).unwrap();
        assert!(diag.converged);

        // objective in the original program form
        let objective = |beta0: f64, b: &[f64]| -> f64 {
            let mut sq = 0.0;
            let mut pen = 0.0;
            for &x in s.values() {
                let mut v = beta0;
                for (j, &t) in knots.iter().enumerate() {
                    v += b[j] * (x - t).max(0.0);
                    if x >= t {
                        pen += b[j];
                    }
                }
                sq += (x - v) * (x - v);
            }
            sq + 2.0 * pen
        };
        let fitted_obj = objective(rule.beta0(), rule.betas());

        // brute force: b1, b2 on a fine grid, b3 = -(b1 + b2); beta0 by
        // closed-form least squares given b
        let steps = 60;
        let mut best = f64::INFINITY;
        for i1 in 0..=steps {
            for i2 in 0..=steps {
                let b1 = tau * i1 as f64 / steps as f64;
                let b2 = -tau + 2.0 * tau * i2 as f64 / steps as f64;
                let b3 = -(b1 + b2);
                let b = [b1, b2, b3];
                // feasibility: partial sums >= 0, tv <= tau
                if b1 < 0.0 || b1 + b2 < 0.0 {
                    continue;
                }
                if b.iter().map(|v| v.abs()).sum::<f64>() > tau {
                    continue;
                }
                // optimal beta0 given b: mean residual
                let mut resid = 0.0;
                for &x in s.values() {
                    let mut v = 0.0;
                    for (j, &t) in knots.iter().enumerate() {
                        v += b[j] * (x - t).max(0.0);
                    }
                    resid += x - v;
                }
                let beta0 = resid / s.len() as f64;
                let obj = objective(beta0, &b);
                if obj < best {
                    best = obj;
                }
            }
        }
        assert!(
            fitted_obj <= best + 1e-4,
            "solver objective {fitted_obj} worse than grid best {best}"
        );
    }
}
