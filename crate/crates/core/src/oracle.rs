//! The oracle separable rule (the risk-optimal univariate rule when the
//! means are known), its derivatives and bounds, and the sawtooth adversary
//! rules that defeat the unpenalized risk estimate.

use crate::density::{GaussianMixtureDensity, GridSpec};
use crate::rules::SeparableRule;
use crate::sample::TruthVector;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Posterior-mean rule under the empirical distribution of the true means:
/// `d*(x) = sum_i theta_i w_i(x)` with Gaussian weights at scale `sigma`.
///
/// Monotone non-decreasing and bounded in `[min theta, max theta]`.
#[derive(Debug, Clone)]
pub struct OracleRule {
    truth: TruthVector,
    sigma: f64,
    mixture: GaussianMixtureDensity,
    range: f64,
}

impl OracleRule {
    pub fn new(truth: TruthVector, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        let mixture = GaussianMixtureDensity::new(truth.thetas().to_vec(), sigma)?;
        let range = truth.range();
        Ok(Self { truth, sigma, mixture, range })
    }

    pub fn truth(&self) -> &TruthVector {
        &self.truth
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Range `r(theta) = max theta - min theta`.
    pub fn theta_range(&self) -> f64 {
        self.range
    }
}

impl SeparableRule for OracleRule {
    fn evaluate(&self, x: f64) -> f64 {
        let (mean, _, _) = self.mixture.posterior_moments(x);
        // mathematically in [min theta, max theta]; clamp shields roundoff
        mean.clamp(self.truth.min(), self.truth.max())
    }

    fn derivative(&self, x: f64) -> f64 {
        let (_, var, _) = self.mixture.posterior_moments(x);
        var / (self.sigma * self.sigma)
    }
}

/// Value of the oracle rule at `x`.
pub fn oracle_evaluate(rule: &OracleRule, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("evaluation point"));
    }
    Ok(rule.evaluate(x))
}

/// First or second derivative of the oracle rule: the weighted variance of
/// the means over `sigma^2`, or their weighted third central moment over
/// `sigma^4`.
pub fn oracle_derivative(rule: &OracleRule, x: f64, order: u8) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("evaluation point"));
    }
    let (_, var, third) = rule.mixture.posterior_moments(x);
    let s2 = rule.sigma * rule.sigma;
    match order {
        1 => Ok(var / s2),
        2 => Ok(third / (s2 * s2)),
        _ => Err(Error::InvalidInput(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

/// Total variation of the oracle derivative: trapezoid quadrature of
/// `|d*''|` over the grid, which must cover `[min theta - 6 sigma,
/// max theta + 6 sigma]`.
pub fn oracle_tv_of_derivative(rule: &OracleRule, grid: &GridSpec) -> Result<f64> {
    let pad = 6.0 * rule.sigma;
    if grid.lo > rule.truth.min() - pad || grid.hi < rule.truth.max() + pad {
        return Err(Error::Config(
            "tv quadrature grid must cover [min theta - 6 sigma, max theta + 6 sigma]".into(),
        ));
    }
    let step = grid.step();
    let mut sum = 0.0;
    let mut prev: Option<f64> = None;
    for x in grid.points() {
        let v = oracle_derivative(rule, x, 2)?.abs();
        if let Some(p) = prev {
            sum += 0.5 * (p + v) * step;
        }
        prev = Some(v);
    }
    Ok(sum)
}

/// Default quadrature grid for [`oracle_tv_of_derivative`].
pub fn default_tv_grid(rule: &OracleRule) -> GridSpec {
    let pad = 6.0 * rule.sigma;
    GridSpec::new(rule.truth.min() - pad, rule.truth.max() + pad, 10_001)
        .expect("padded truth range is a valid grid")
}

/// Monte Carlo oracle risk: the mean oracle loss of `d*` over fresh draws
/// `X_i ~ N(theta_i, sigma^2)`. Deterministic given the seed.
pub fn oracle_risk(rule: &OracleRule, reps: usize, seed: u64) -> Result<f64> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let n = rule.truth.len();
    let mut total = 0.0;
    for rep in 0..reps {
        let mut rng = crate::rngutil::substream(seed, &[0x0c1e, rep as u64]);
        let mut loss = 0.0;
        for &theta in rule.truth.thetas() {
            let x = theta + rule.sigma * rng.sample::<f64, _>(StandardNormal);
            let d = rule.evaluate(x);
            loss += (theta - d) * (theta - d);
        }
        total += loss / n as f64;
    }
    Ok(total / reps as f64)
}

/// Continuous piecewise-linear rule interpolating the data with slope `a`
/// at every data point, using two bends placed at the thirds of each gap.
///
/// Satisfies `d(x_i) = x_i` and `d'(x_i) = a`, so its unbiased risk estimate
/// is `2 sigma^2 a - sigma^2` with zero squared error, independent of the
/// data: the overfitting adversary for the unpenalized class.
#[derive(Debug, Clone)]
pub struct SawtoothRule {
    points: Vec<f64>,
    slope: f64,
}

impl SawtoothRule {
    pub fn new(points: Vec<f64>, slope: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("sawtooth needs at least two data points".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput("sawtooth data points must be strictly increasing".into()));
        }
        if !slope.is_finite() {
            return Err(Error::NonFinite("sawtooth slope"));
        }
        Ok(Self { points, slope })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Interior slope of the middle third of each gap; continuity forces
    /// `3 - 2a` regardless of the gap width.
    pub fn middle_slope(&self) -> f64 {
        3.0 - 2.0 * self.slope
    }

    /// Total variation of the derivative, summed over slope oscillations:
    /// each gap contributes `2 |(3 - 2a) - a|`.
    pub fn derivative_tv(&self) -> f64 {
        let osc = (self.middle_slope() - self.slope).abs();
        2.0 * osc * (self.points.len() - 1) as f64
    }
}

impl SeparableRule for SawtoothRule {
    fn evaluate(&self, x: f64) -> f64 {
        let pts = &self.points;
        let a = self.slope;
        let n = pts.len();
        if x <= pts[0] {
            return pts[0] + a * (x - pts[0]);
        }
        if x >= pts[n - 1] {
            return pts[n - 1] + a * (x - pts[n - 1]);
        }
        let i = pts.partition_point(|&p| p <= x) - 1;
        let (lo, hi) = (pts[i], pts[i + 1]);
        let gap = hi - lo;
        let r = x - lo;
        if r <= gap / 3.0 {
            lo + a * r
        } else if r >= 2.0 * gap / 3.0 {
            hi + a * (r - gap)
        } else {
            lo + a * gap / 3.0 + self.middle_slope() * (r - gap / 3.0)
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        let pts = &self.points;
        let n = pts.len();
        if x < pts[0] || x >= pts[n - 1] {
            return self.slope;
        }
        let i = pts.partition_point(|&p| p <= x) - 1;
        let gap = pts[i + 1] - pts[i];
        let r = x - pts[i];
        // right-derivative convention at the bend points
        if r < gap / 3.0 || r >= 2.0 * gap / 3.0 {
            self.slope
        } else {
            self.middle_slope()
        }
    }
}

/// Unbiased risk estimate of a sawtooth rule on its own data points; equals
/// `2 sigma^2 a - sigma^2` exactly because the rule interpolates.
pub fn sawtooth_sure_value(saw: &SawtoothRule, sigma: f64) -> Result<f64> {
    let sample = crate::sample::SampleSet::new(saw.points().to_vec(), sigma)?;
    Ok(crate::risk::sure(saw, &sample)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    fn two_point_rule() -> OracleRule {
        OracleRule::new(TruthVector::new(vec![0.0, 2.0]).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn constant_truth_is_constant_rule() {
        let rule = OracleRule::new(TruthVector::new(vec![1.5; 7]).unwrap(), 0.3).unwrap();
        for x in [-10.0, 0.0, 1.5, 42.0] {
            assert_abs_diff_eq!(oracle_evaluate(&rule, x).unwrap(), 1.5, epsilon = 1e-14);
            assert_abs_diff_eq!(oracle_derivative(&rule, x, 1).unwrap(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(oracle_derivative(&rule, x, 2).unwrap(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn symmetric_truth_vanishes_at_zero() {
        let rule = OracleRule::new(TruthVector::new(vec![-4.0, 4.0]).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(oracle_evaluate(&rule, 0.0).unwrap(), 0.0, epsilon = 1e-12);
        // symmetric third moment
        assert_abs_diff_eq!(oracle_derivative(&rule, 0.0, 2).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_closed_forms() {
        let rule = two_point_rule();
        // d*(0) = 2 w_2(0) = 2 / (1 + e^2)
        let expect = 2.0 / (1.0 + std::f64::consts::E.powi(2));
        assert_abs_diff_eq!(oracle_evaluate(&rule, 0.0).unwrap(), expect, epsilon = 1e-9);
        assert_abs_diff_eq!(oracle_evaluate(&rule, 0.0).unwrap(), 0.238406, epsilon = 1e-6);
        // d*'(0) = w1 w2 (2 - 0)^2
        let w1 = 1.0 / (1.0 + (-2.0_f64).exp());
        let w2 = 1.0 - w1;
        assert_abs_diff_eq!(
            oracle_derivative(&rule, 0.0, 1).unwrap(),
            4.0 * w1 * w2,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(oracle_derivative(&rule, 0.0, 1).unwrap(), 0.419975, epsilon = 1e-6);
    }

    #[test]
    fn first_derivative_matches_finite_differences() {
        let mut rng = crate::rngutil::substream(21, &[0]);
        let thetas: Vec<f64> = (0..15).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let rule = OracleRule::new(TruthVector::new(thetas).unwrap(), 0.8).unwrap();
        for _ in 0..40 {
            let x = rng.gen_range(-3.0..3.0);
            let step = 1e-6;
            let fd = (rule.evaluate(x + step) - rule.evaluate(x - step)) / (2.0 * step);
            let exact = oracle_derivative(&rule, x, 1).unwrap();
            assert_relative_eq!(exact, fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn monotone_and_bounded_on_a_grid() {
        let mut rng = crate::rngutil::substream(22, &[0]);
        let thetas: Vec<f64> = (0..25).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let t = TruthVector::new(thetas).unwrap();
        let (lo, hi) = (t.min(), t.max());
        let rule = OracleRule::new(t, 0.5).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..400 {
            let x = -8.0 + k as f64 * 0.04;
            let v = rule.evaluate(x);
            assert!(v >= prev - 1e-12, "not monotone at {x}");
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn tweedie_form_matches_weight_form() {
        // d*(x) = x + sigma^2 f'(x)/f(x) with f the mixture of the means
        let mut rng = crate::rngutil::substream(23, &[0]);
        let thetas: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sigma = 0.9;
        let rule = OracleRule::new(TruthVector::new(thetas.clone()).unwrap(), sigma).unwrap();
        let mix = GaussianMixtureDensity::new(thetas, sigma).unwrap();
        for _ in 0..30 {
            let x = rng.gen_range(-4.0..4.0);
            let (r1, _, _) = mix.derivative_ratios(x);
            let tweedie = x + sigma * sigma * r1;
            assert_relative_eq!(rule.evaluate(x), tweedie, max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn tv_bound_and_grid_refinement() {
        let rule = two_point_rule();
        let tv = oracle_tv_of_derivative(&rule, &default_tv_grid(&rule)).unwrap();
        assert!(tv <= 4.0 + 1e-6); // sigma^{-2} r^2 = 4
        let fine = GridSpec::new(-6.0, 8.0, 40_004).unwrap();
        let tv_fine = oracle_tv_of_derivative(&rule, &fine).unwrap();
        assert_relative_eq!(tv, tv_fine, max_relative = 1e-4);
        // wide-range bound example
        let rule = OracleRule::new(TruthVector::new(vec![-3.0, 3.0]).unwrap(), 1.0).unwrap();
        let tv = oracle_tv_of_derivative(&rule, &default_tv_grid(&rule)).unwrap();
        assert!(tv <= 36.0 + 1e-6);
        // grid not covering the support is a configuration error
        let bad = GridSpec::new(-1.0, 1.0, 100).unwrap();
        assert!(oracle_tv_of_derivative(&rule, &bad).is_err());
    }

    #[test]
    fn oracle_risk_constant_truth_is_zero() {
        let rule = OracleRule::new(TruthVector::new(vec![2.0; 5]).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(oracle_risk(&rule, 10, 3).unwrap(), 0.0, epsilon = 1e-25);
        let single = OracleRule::new(TruthVector::new(vec![0.0]).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(oracle_risk(&single, 10, 3).unwrap(), 0.0, epsilon = 1e-25);
    }

    #[test]
    fn oracle_beats_identity_rule() {
        let mut rng = crate::rngutil::substream(31, &[0]);
        let thetas: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let rule = OracleRule::new(TruthVector::new(thetas).unwrap(), 1.0).unwrap();
        let risk = oracle_risk(&rule, 20, 17).unwrap();
        assert!(risk < 1.0, "oracle risk {risk} should beat the identity rule's sigma^2 = 1");
    }

    #[test]
    fn sawtooth_interpolates_with_constant_slope_at_data() {
        let pts = vec![-1.0, 0.0, 0.5, 2.0];
        for a in [-5.0, 0.0, 1.0] {
            let saw = SawtoothRule::new(pts.clone(), a).unwrap();
            for &p in &pts {
                assert_eq!(saw.evaluate(p), p);
                assert_eq!(saw.derivative(p), a);
            }
            // continuity across segment boundaries
            for k in 0..300 {
                let x = -1.5 + k as f64 * 0.015;
                let eps = 1e-9;
                assert_abs_diff_eq!(saw.evaluate(x - eps), saw.evaluate(x + eps), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn sawtooth_sure_matches_closed_form() {
        let pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 3.0).collect();
        for (a, sigma) in [(0.0, 1.0), (1.0, 1.0), (-5.0, 2.0)] {
            let saw = SawtoothRule::new(pts.clone(), a).unwrap();
            let got = sawtooth_sure_value(&saw, sigma).unwrap();
            let expect = 2.0 * sigma * sigma * a - sigma * sigma;
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn sawtooth_tv_large_for_nonpositive_slope() {
        // TV(d') >= 2(n-1) whenever a <= 0
        let pts: Vec<f64> = (0..8).map(|i| i as f64).collect();
        for a in [0.0, -0.5, -3.0] {
            let saw = SawtoothRule::new(pts.clone(), a).unwrap();
            assert!(saw.derivative_tv() >= 2.0 * (pts.len() - 1) as f64);
        }
    }
}
