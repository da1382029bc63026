//! Gaussian mixture densities, their derivatives up to order three, kernel
//! density estimates (exact and FFT-binned), and bandwidth rules.
//!
//! All densities and posterior-style weights are computed in the log domain
//! with max-subtraction. Ratios such as `f'/f` are formed from the weights
//! directly, so they stay finite even when the density itself underflows;
//! this is what keeps the low-noise regime free of NaNs.

use crate::sample::SampleSet;
use crate::{Error, Result};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74; // ln sqrt(2 pi)

/// Terms this far below the row maximum contribute < 1e-26 relative mass and
/// are skipped when exponentiating.
const LOG_CUTOFF: f64 = 60.0;

/// Equal-weight Gaussian mixture `f(x) = n^{-1} sum_i phi_s(x - c_i)`.
///
/// The centers may be true means, observations, or an NPMLE grid; the scale
/// may be the noise level, a bandwidth, or their convolution.
#[derive(Debug, Clone)]
pub struct GaussianMixtureDensity {
    centers: Vec<f64>,
    scale: f64,
}

impl GaussianMixtureDensity {
    pub fn new(centers: Vec<f64>, scale: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one center".into()));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mixture centers"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidInput(format!("mixture scale must be positive, got {scale}")));
        }
        Ok(Self { centers, scale })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `log f(x)` via log-sum-exp; finite whenever the nearest center is
    /// within ~38 scales of `x`, and a large negative number otherwise.
    pub fn log_density(&self, x: f64) -> f64 {
        let s = self.scale;
        let mut max = f64::NEG_INFINITY;
        let logs: Vec<f64> = self
            .centers
            .iter()
            .map(|&c| {
                let z = (x - c) / s;
                let l = -0.5 * z * z;
                if l > max {
                    max = l;
                }
                l
            })
            .collect();
        let mut sum = 0.0;
        for l in logs {
            if l - max > -LOG_CUTOFF {
                sum += (l - max).exp();
            }
        }
        max + sum.ln() - s.ln() - LN_SQRT_2PI - (self.centers.len() as f64).ln()
    }

    /// Normalized component weights `w_i(x)` (linear scale, summing to one).
    pub fn weights(&self, x: f64) -> Vec<f64> {
        let s = self.scale;
        let mut max = f64::NEG_INFINITY;
        let mut logs: Vec<f64> = self
            .centers
            .iter()
            .map(|&c| {
                let z = (x - c) / s;
                let l = -0.5 * z * z;
                if l > max {
                    max = l;
                }
                l
            })
            .collect();
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = if *l - max > -LOG_CUTOFF { (*l - max).exp() } else { 0.0 };
            total += *l;
        }
        for l in logs.iter_mut() {
            *l /= total;
        }
        logs
    }

    /// Weighted mean, variance, and third central moment of the centers
    /// under the weights at `x`.
    pub fn posterior_moments(&self, x: f64) -> (f64, f64, f64) {
        let w = self.weights(x);
        let mean: f64 = w.iter().zip(&self.centers).map(|(&wi, &c)| wi * c).sum();
        let mut var = 0.0;
        let mut third = 0.0;
        for (&wi, &c) in w.iter().zip(&self.centers) {
            if wi == 0.0 {
                continue;
            }
            let d = c - mean;
            var += wi * d * d;
            third += wi * d * d * d;
        }
        (mean, var, third)
    }

    /// Derivative ratios `(f'/f, f''/f, f'''/f)` at `x`, formed from the
    /// weights so they remain finite when `f` underflows.
    pub fn derivative_ratios(&self, x: f64) -> (f64, f64, f64) {
        let w = self.weights(x);
        let s2 = self.scale * self.scale;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        for (&wi, &c) in w.iter().zip(&self.centers) {
            if wi == 0.0 {
                continue;
            }
            let u = x - c;
            m1 += wi * u;
            m2 += wi * u * u;
            m3 += wi * u * u * u;
        }
        let r1 = -m1 / s2;
        let r2 = (m2 - s2) / (s2 * s2);
        let r3 = -(m3 - 3.0 * s2 * m1) / (s2 * s2 * s2);
        (r1, r2, r3)
    }
}

/// Log component weights at `x` with max-subtraction; `exp` of the outputs
/// sums to one.
pub fn log_mixture_weights(mix: &GaussianMixtureDensity, x: f64) -> Vec<f64> {
    let s = mix.scale;
    let mut max = f64::NEG_INFINITY;
    let mut logs: Vec<f64> = mix
        .centers
        .iter()
        .map(|&c| {
            let z = (x - c) / s;
            let l = -0.5 * z * z;
            if l > max {
                max = l;
            }
            l
        })
        .collect();
    let mut total = 0.0;
    for &l in &logs {
        if l - max > -LOG_CUTOFF {
            total += (l - max).exp();
        }
    }
    // subtract in two steps: folding ln(total) into max first would lose it
    // entirely to the ulp of a huge |max|
    let ln_total = total.ln();
    for l in logs.iter_mut() {
        *l = (*l - max) - ln_total;
    }
    logs
}

/// `k`-th derivative of the mixture density at `x`, `k` in `0..=3`.
///
/// Order zero goes through the log-domain path and only underflows to zero
/// when the true value is below the smallest positive double; higher orders
/// are `f(x)` times a weighted polynomial moment.
pub fn mixture_density(mix: &GaussianMixtureDensity, x: f64, order: u8) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("density evaluation point"));
    }
    if order > 3 {
        return Err(Error::InvalidInput(format!("derivative order must be 0..=3, got {order}")));
    }
    let f = mix.log_density(x).exp();
    if order == 0 {
        return Ok(f);
    }
    let (r1, r2, r3) = mix.derivative_ratios(x);
    Ok(match order {
        1 => f * r1,
        2 => f * r2,
        _ => f * r3,
    })
}

/// Bandwidth selection rules for the Gaussian KDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `sigma * n^{-1/6}`, the rate-optimal default.
    AsymptoticN16,
    /// `sigma * (ln n)^{-1/2}`, the f-modeling baseline's recommendation.
    BgLogNHalf,
    /// `0.9 * min(sd, IQR/1.34) * n^{-1/5}`.
    Silverman,
    Fixed { h: f64 },
}

/// Resolve a bandwidth rule against a sample; data-driven rules need `n >= 2`.
pub fn resolve_bandwidth(rule: BandwidthRule, sample: &SampleSet) -> Result<f64> {
    let n = sample.len() as f64;
    let h = match rule {
        BandwidthRule::Fixed { h } => {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidInput(format!("fixed bandwidth must be positive, got {h}")));
            }
            h
        }
        BandwidthRule::AsymptoticN16 => {
            require_data_driven(sample)?;
            sample.sigma() * n.powf(-1.0 / 6.0)
        }
        BandwidthRule::BgLogNHalf => {
            require_data_driven(sample)?;
            sample.sigma() / n.ln().sqrt()
        }
        BandwidthRule::Silverman => {
            require_data_driven(sample)?;
            let xs = sample.values();
            let mean = sample.mean();
            let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
            let iqr = quantile(xs, 0.75) - quantile(xs, 0.25);
            let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
            0.9 * spread * n.powf(-0.2)
        }
    };
    if !(h > 0.0) {
        return Err(Error::Config("resolved bandwidth is not positive (degenerate sample)".into()));
    }
    Ok(h)
}

fn require_data_driven(sample: &SampleSet) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("data-driven bandwidth rules need n >= 2".into()));
    }
    Ok(())
}

/// Linear-interpolation sample quantile of `xs` at probability `p`.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Regular evaluation grid `(lo, hi, size)` with `size` inclusive points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub size: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, size: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if size < 2 {
            return Err(Error::Config("grid needs at least two points".into()));
        }
        Ok(Self { lo, hi, size })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.size - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.size).map(move |k| self.lo + k as f64 * step)
    }
}

/// Internal grid refinement for the FFT path. Linear binning at the output
/// resolution alone can leave errors of a few 1e-6 for small bandwidths; a
/// 4x finer binning grid keeps the deviation from the exact sum below 1e-7
/// while preserving the output grid as an exact subset.
const FFT_REFINE: usize = 4;

/// Core of the FFT path: linear-bin the observations on a regular grid of
/// `bins` points starting at `lo` with spacing `step`, then circularly
/// convolve with the Gaussian kernel. Returns per-grid-point density values
/// (already divided by the sample size). No resolution validation happens
/// here; callers own their accuracy contract.
pub(crate) fn gaussian_binned_convolution(
    values: &[f64],
    h: f64,
    lo: f64,
    step: f64,
    bins: usize,
) -> Vec<f64> {
    let mut counts = vec![0.0_f64; bins];
    for &x in values {
        let pos = (x - lo) / step;
        let j = (pos.floor().max(0.0) as usize).min(bins - 2);
        let w = (pos - j as f64).clamp(0.0, 1.0);
        counts[j] += 1.0 - w;
        counts[j + 1] += w;
    }

    let len = 2 * bins;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let ifft = planner.plan_fft_inverse(len);

    let mut a: Vec<Complex<f64>> = vec![Complex::default(); len];
    for (i, &c) in counts.iter().enumerate() {
        a[i].re = c;
    }
    let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
    let mut b: Vec<Complex<f64>> = vec![Complex::default(); len];
    for m in 0..bins {
        let z = m as f64 * step / h;
        let k = norm * (-0.5 * z * z).exp();
        b[m].re = k;
        if m > 0 {
            b[len - m].re = k;
        }
    }
    fft.process(&mut a);
    fft.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    ifft.process(&mut a);

    let scale = 1.0 / (len as f64 * values.len() as f64);
    (0..bins).map(|k| (a[k].re * scale).max(0.0)).collect()
}

/// Linear-binned FFT approximation of the Gaussian KDE on `grid`.
///
/// The grid must cover `[min X - 4h, max X + 4h]`, have power-of-two size,
/// and spacing at most `h`.
pub fn kde_grid_fft(sample: &SampleSet, h: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    if !grid.size.is_power_of_two() {
        return Err(Error::Config(format!("fft grid size must be a power of two, got {}", grid.size)));
    }
    if grid.lo > sample.min() - 4.0 * h || grid.hi < sample.max() + 4.0 * h {
        return Err(Error::Config(
            "fft grid must cover [min X - 4h, max X + 4h]".into(),
        ));
    }
    let step = grid.step();
    if step > h {
        return Err(Error::Config(format!(
            "fft grid too coarse: spacing {step:.3e} exceeds bandwidth {h:.3e}"
        )));
    }

    let p = grid.size;
    let fine_n = (p - 1) * FFT_REFINE + 1;
    let fine_step = step / FFT_REFINE as f64;
    let fine = gaussian_binned_convolution(sample.values(), h, grid.lo, fine_step, fine_n);
    Ok((0..p).map(|k| fine[k * FFT_REFINE]).collect())
}

/// Exact Gaussian KDE of the sample at bandwidth `h`, evaluated pointwise.
pub fn kde_exact(sample: &SampleSet, h: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let mix = GaussianMixtureDensity::new(sample.values().to_vec(), h)?;
    xs.iter().map(|&x| mixture_density(&mix, x, 0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    const PHI0: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2 pi)

    #[test]
    fn standard_normal_mode_and_symmetry() {
        let mix = GaussianMixtureDensity::new(vec![0.0], 1.0).unwrap();
        assert_abs_diff_eq!(mixture_density(&mix, 0.0, 0).unwrap(), PHI0, epsilon = 1e-12);
        assert_abs_diff_eq!(mixture_density(&mix, 0.0, 1).unwrap(), 0.0, epsilon = 1e-15);
        assert!(mixture_density(&mix, f64::NAN, 0).is_err());
        assert!(mixture_density(&mix, 0.0, 4).is_err());
    }

    /// Central finite differences of order k-1 as the derivative oracle.
    fn fd_derivative(mix: &GaussianMixtureDensity, x: f64, order: u8, step: f64) -> f64 {
        let lower = |y: f64| mixture_density(mix, y, order - 1).unwrap();
        (lower(x + step) - lower(x - step)) / (2.0 * step)
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        // at the symmetric midpoint the true second derivative is exactly
        // zero (u^2 = s^2 for both components), so the comparison carries an
        // absolute floor for finite-difference noise
        let mix = GaussianMixtureDensity::new(vec![-1.0, 1.0], 1.0).unwrap();
        let fd = fd_derivative(&mix, 0.0, 2, 1e-4);
        let exact = mixture_density(&mix, 0.0, 2).unwrap();
        assert_relative_eq!(exact, fd, max_relative = 1e-6, epsilon = 1e-6);
        assert_abs_diff_eq!(exact, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn derivative_orders_match_finite_differences_on_random_grid() {
        let mut rng = crate::rngutil::substream(42, &[1]);
        let centers: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mix = GaussianMixtureDensity::new(centers, 0.7).unwrap();
        for _ in 0..50 {
            let x = rng.gen_range(-4.0..4.0);
            for order in 1..=3u8 {
                let fd = fd_derivative(&mix, x, order, 1e-5);
                let exact = mixture_density(&mix, x, order).unwrap();
                assert_relative_eq!(exact, fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn log_weights_normalize_at_tiny_scale() {
        let mix = GaussianMixtureDensity::new(vec![0.0, 1.0, 2.0, 2.0000001], 1e-8).unwrap();
        for x in [0.0, 0.5, 1.0, 1.999, 2.0] {
            let lw = log_mixture_weights(&mix, x);
            let total: f64 = lw.iter().map(|l| l.exp()).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_weights_known_values() {
        // single component
        let mix = GaussianMixtureDensity::new(vec![5.0], 1.0).unwrap();
        assert_eq!(log_mixture_weights(&mix, -3.0), vec![0.0]);
        // symmetric pair
        let mix = GaussianMixtureDensity::new(vec![-2.0, 2.0], 1.0).unwrap();
        let lw = log_mixture_weights(&mix, 0.0);
        assert_abs_diff_eq!(lw[0], 0.5_f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lw[1], 0.5_f64.ln(), epsilon = 1e-12);
        // logistic identity: centers 0 and 2 at x = 0 give w_1 = 1/(1+e^{-2})
        let mix = GaussianMixtureDensity::new(vec![0.0, 2.0], 1.0).unwrap();
        let lw = log_mixture_weights(&mix, 0.0);
        let w1 = 1.0 / (1.0 + (-2.0_f64).exp());
        assert_abs_diff_eq!(lw[0].exp(), w1, epsilon = 1e-12);
        assert_abs_diff_eq!(lw[1].exp(), 1.0 - w1, epsilon = 1e-12);
    }

    #[test]
    fn log_density_finite_within_38_scales() {
        let mix = GaussianMixtureDensity::new(vec![0.0], 1e-6).unwrap();
        let l = mix.log_density(38.0 * 1e-6);
        assert!(l.is_finite());
    }

    #[test]
    fn mixture_integrates_to_one() {
        let mix = GaussianMixtureDensity::new(vec![-2.0, 0.5, 3.0], 0.8).unwrap();
        let grid = GridSpec::new(-10.0, 11.0, 8001).unwrap();
        let step = grid.step();
        let vals: Vec<f64> = grid.points().map(|x| mixture_density(&mix, x, 0).unwrap()).collect();
        let integral: f64 =
            step * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]));
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn bandwidth_rules_resolve() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let s = SampleSet::new(xs, 1.0).unwrap();
        let h = resolve_bandwidth(BandwidthRule::AsymptoticN16, &s).unwrap();
        assert_relative_eq!(h, 0.31623, max_relative = 1e-4); // 1000^{-1/6} = 10^{-1/2}
        let h = resolve_bandwidth(BandwidthRule::BgLogNHalf, &s).unwrap();
        assert_relative_eq!(h, (1000.0_f64).ln().powf(-0.5), max_relative = 1e-12);
        assert_relative_eq!(h, 0.380480, max_relative = 1e-5);
        let h = resolve_bandwidth(BandwidthRule::Fixed { h: 0.25 }, &s).unwrap();
        assert_eq!(h, 0.25);
        let tiny = SampleSet::new(vec![1.0], 1.0).unwrap();
        assert!(resolve_bandwidth(BandwidthRule::Silverman, &tiny).is_err());
        assert!(resolve_bandwidth(BandwidthRule::Fixed { h: -1.0 }, &tiny).is_err());
    }

    #[test]
    fn fft_kde_single_point_recovers_kernel_peak() {
        // delta = 9/4096 puts zero exactly on the grid (k = 2048).
        let s = SampleSet::new(vec![0.0], 1.0).unwrap();
        let delta = 9.0 / 4096.0;
        let grid = GridSpec::new(-4.5, -4.5 + 4095.0 * delta, 4096).unwrap();
        let f = kde_grid_fft(&s, 1.0, &grid).unwrap();
        assert_abs_diff_eq!(f[2048], PHI0, epsilon = 1e-6);
    }

    #[test]
    fn fft_kde_matches_exact_sum() {
        let mut rng = crate::rngutil::substream(7, &[2]);
        let xs: Vec<f64> =
            (0..100).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let s = SampleSet::new(xs, 1.0).unwrap();
        let h = 0.3;
        let grid = GridSpec::new(s.min() - 4.0 * h - 0.1, s.max() + 4.0 * h + 0.1, 4096).unwrap();
        let fft = kde_grid_fft(&s, h, &grid).unwrap();
        let pts: Vec<f64> = grid.points().collect();
        let exact = kde_exact(&s, h, &pts).unwrap();
        let max_err = fft
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_err < 1e-6, "fft/exact deviation {max_err:e}");
        // density sanity: nonnegative, integrates to one
        assert!(fft.iter().all(|&v| v >= 0.0));
        let step = grid.step();
        let integral: f64 = step * (fft.iter().sum::<f64>() - 0.5 * (fft[0] + fft[4095]));
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn fft_kde_rejects_bad_grids() {
        let s = SampleSet::new(vec![0.0, 1.0], 1.0).unwrap();
        // not a power of two
        let g = GridSpec::new(-8.0, 8.0, 1000).unwrap();
        assert!(kde_grid_fft(&s, 1.0, &g).is_err());
        // does not cover the 4h padding
        let g = GridSpec::new(-2.0, 2.0, 4096).unwrap();
        assert!(kde_grid_fft(&s, 1.0, &g).is_err());
        // coarser than the bandwidth
        let g = GridSpec::new(-60.0, 60.0, 64).unwrap();
        assert!(kde_grid_fft(&s, 1.0, &g).is_err());
    }

    #[test]
    fn fft_kde_translation_equivariance() {
        // dyadic data, shift and bounds keep the binning arithmetic exact
        let base: Vec<f64> = vec![-0.5, 0.25, 0.75, 1.5, 2.0];
        let t = 4.0;
        let h = 0.5;
        let s0 = SampleSet::new(base.clone(), 1.0).unwrap();
        let s1 = SampleSet::new(base.iter().map(|x| x + t).collect(), 1.0).unwrap();
        let g0 = GridSpec::new(-4.0, 12.0, 4096).unwrap();
        let g1 = GridSpec::new(-4.0 + t, 12.0 + t, 4096).unwrap();
        let f0 = kde_grid_fft(&s0, h, &g0).unwrap();
        let f1 = kde_grid_fft(&s1, h, &g1).unwrap();
        assert_eq!(f0, f1);
    }

    #[test]
    fn quantile_interpolates() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&xs, 0.5), 2.5);
    }
}
