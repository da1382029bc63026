//! The linear rule minimizing the unbiased risk estimate in closed form.

use crate::risk::sure;
use crate::rules::{Diagnostics, FitReport, LinearRule, Rule};
use crate::sample::SampleSet;
use crate::{Error, Result};

/// Closed-form minimizer of the unbiased risk estimate over `a + b x`:
/// `b = 1 - n sigma^2 / S^2` with `S^2 = sum (X_i - mean)^2`, and
/// `a = (1 - b) mean`. A sample with zero spread degenerates to the constant
/// rule at the mean, flagged in the diagnostics.
pub fn fit_linear_sure(sample: &SampleSet) -> Result<FitReport> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("linear fit needs n >= 2".into()));
    }
    let mean = sample.mean();
    let s2: f64 = sample.values().iter().map(|x| (x - mean) * (x - mean)).sum();
    let n_sigma2 = sample.len() as f64 * sample.sigma2();

    let mut diagnostics = Diagnostics::converged(1);
    let b = if s2 > 0.0 {
        1.0 - n_sigma2 / s2
    } else {
        diagnostics.notes.push("zero spread: slope forced to zero".into());
        0.0
    };
    let rule = LinearRule::new((1.0 - b) * mean, b);
    let risk = sure(&rule, sample)?.value;
    Ok(FitReport::new(Rule::Linear(rule), risk, diagnostics)
        .with_hyperparam("slope", b)
        .with_hyperparam("intercept", rule.a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::SeparableRule;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_cancellation_gives_constant_rule() {
        // X = [0, 2], sigma = 1: S^2 = 2 = n sigma^2, so b = 0 and a = 1
        let s = SampleSet::new(vec![0.0, 2.0], 1.0).unwrap();
        let fit = fit_linear_sure(&s).unwrap();
        match &fit.rule {
            Rule::Linear(r) => {
                assert_abs_diff_eq!(r.b, 0.0, epsilon = 1e-15);
                assert_abs_diff_eq!(r.a, 1.0, epsilon = 1e-15);
            }
            other => panic!("expected linear rule, got {other:?}"),
        }
    }

    #[test]
    fn three_point_closed_form() {
        // X = [-1, 0, 1], sigma = 1: S^2 = 2, b = 1 - 3/2 = -0.5, a = 0
        let s = SampleSet::new(vec![-1.0, 0.0, 1.0], 1.0).unwrap();
        let fit = fit_linear_sure(&s).unwrap();
        match &fit.rule {
            Rule::Linear(r) => {
                assert_abs_diff_eq!(r.b, -0.5, epsilon = 1e-15);
                assert_abs_diff_eq!(r.a, 0.0, epsilon = 1e-15);
            }
            other => panic!("expected linear rule, got {other:?}"),
        }
        // cross-check against grid minimization of the risk estimate
        let mut best = f64::INFINITY;
        let mut best_ab = (0.0, 0.0);
        for ia in 0..201 {
            for ib in 0..201 {
                let a = -1.0 + ia as f64 * 0.01;
                let b = -1.0 + ib as f64 * 0.01;
                let v = sure(&LinearRule::new(a, b), &s).unwrap().value;
                if v < best {
                    best = v;
                    best_ab = (a, b);
                }
            }
        }
        assert_abs_diff_eq!(best_ab.0, 0.0, epsilon = 0.011);
        assert_abs_diff_eq!(best_ab.1, -0.5, epsilon = 0.011);
        assert!(fit.risk_estimate <= best + 1e-12);
    }

    #[test]
    fn dominates_mean_and_identity_rules() {
        let s = SampleSet::new(vec![0.3, -2.0, 1.7, 0.1, 4.0, -0.4], 1.0).unwrap();
        let fit = fit_linear_sure(&s).unwrap();
        let at_mean = sure(&LinearRule::new(s.mean(), 0.0), &s).unwrap().value;
        let at_identity = sure(&LinearRule::identity(), &s).unwrap().value;
        assert!(fit.risk_estimate <= at_mean + 1e-12);
        assert!(fit.risk_estimate <= at_identity + 1e-12);
    }

    #[test]
    fn degenerate_spread_is_flagged() {
        let s = SampleSet::new(vec![2.0, 2.0, 2.0], 1.0).unwrap();
        let fit = fit_linear_sure(&s).unwrap();
        assert!(!fit.diagnostics.notes.is_empty());
        match &fit.rule {
            Rule::Linear(r) => {
                assert_eq!(r.b, 0.0);
                assert_eq!(r.evaluate(99.0), 2.0);
            }
            other => panic!("expected linear rule, got {other:?}"),
        }
        assert!(fit_linear_sure(&SampleSet::new(vec![1.0], 1.0).unwrap()).is_err());
    }
}
