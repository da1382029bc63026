//! Selection of the derivative total-variation budget `tau` for the
//! piecewise-linear fit: a high-probability upper bound, a plug-in estimate
//! of the oracle quantity, and k-fold cross-validation.

use super::KnotStrategy;
use crate::density::{GaussianMixtureDensity, GridSpec};
use crate::risk::sure;
use crate::rngutil::substream;
use crate::sample::SampleSet;
use crate::{Error, Result};
use rand::seq::SliceRandom;

/// How the piecewise-linear fit picks its budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSelector {
    UpperBound,
    Plugin,
    Cv { k: usize, grid_size: usize },
}

impl Default for TauSelector {
    fn default() -> Self {
        TauSelector::Plugin
    }
}

/// Plug-in refuses below this noise scale; the mixture ratios it integrates
/// are dominated by roundoff there.
pub const PLUGIN_SIGMA_FLOOR: f64 = 1e-4;

/// Degenerate plug-in integrals are floored here so the rule class never
/// collapses to a single point.
pub const PLUGIN_TAU_FLOOR: f64 = 1e-6;

/// High-probability bound `sigma^{-2} (max X - min X + 2 b_n)^2` with
/// `b_n = (3 sigma^2 ln n)^{1/2}`.
pub fn tau_upper_bound(sample: &SampleSet) -> f64 {
    let bn = super::bn_pwl(sample);
    let range = sample.max() - sample.min();
    let width = range + 2.0 * bn;
    width * width / sample.sigma2()
}

/// Plug-in estimate: numerically integrate the absolute second derivative of
/// the oracle rule with the observations substituted for the means,
/// `|sigma^2 f'''/f - 3 sigma^2 (f''/f)(f'/f) + 2 sigma^2 (f'/f)^3|`.
///
/// Defaults to 10001 trapezoid points on `[min X - 6 sigma, max X + 6 sigma]`.
pub fn tau_plugin(sample: &SampleSet, grid: Option<GridSpec>) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::InvalidInput("plug-in tau needs n >= 2".into()));
    }
    let sigma = sample.sigma();
    if sigma <= PLUGIN_SIGMA_FLOOR {
        return Err(Error::Config(format!(
            "plug-in tau is unstable at sigma = {sigma:e} (<= {PLUGIN_SIGMA_FLOOR:e}); \
             use the upper bound or cross-validation"
        )));
    }
    let grid = match grid {
        Some(g) => g,
        None => GridSpec::new(sample.min() - 6.0 * sigma, sample.max() + 6.0 * sigma, 10_001)?,
    };
    let mix = GaussianMixtureDensity::new(sample.values().to_vec(), sigma)?;
    let s2 = sigma * sigma;
    let step = grid.step();
    let mut sum = 0.0;
    let mut prev: Option<f64> = None;
    for x in grid.points() {
        let (r1, r2, r3) = mix.derivative_ratios(x);
        let v = (s2 * r3 - 3.0 * s2 * r2 * r1 + 2.0 * s2 * r1 * r1 * r1).abs();
        if let Some(p) = prev {
            sum += 0.5 * (p + v) * step;
        }
        prev = Some(v);
    }
    Ok(sum.max(PLUGIN_TAU_FLOOR))
}

/// Cross-validated tau with the default knot strategy (30 regular knots).
pub fn tau_cv(sample: &SampleSet, k: usize, grid_size: usize, seed: u64) -> Result<f64> {
    tau_cv_with(sample, k, grid_size, seed, KnotStrategy::default())
}

/// Cross-validated tau: candidates log-spaced on `[1e-3 tau_ub, tau_ub]`;
/// each candidate is scored by the unbiased risk estimate of the
/// training-fold fit evaluated on the held-out fold, averaged over folds.
/// Fold assignment is a seeded shuffle.
pub fn tau_cv_with(
    sample: &SampleSet,
    k: usize,
    grid_size: usize,
    seed: u64,
    knot_strategy: KnotStrategy,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidInput("cross-validation needs k >= 2".into()));
    }
    if sample.len() < 2 * k {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs n >= 2k (n = {}, k = {k})",
            sample.len()
        )));
    }
    if grid_size == 0 {
        return Err(Error::InvalidInput("candidate grid must be nonempty".into()));
    }

    let tau_ub = tau_upper_bound(sample);
    let lo = 1e-3 * tau_ub;
    let candidates: Vec<f64> = if grid_size == 1 {
        vec![lo]
    } else {
        (0..grid_size)
            .map(|j| lo * (tau_ub / lo).powf(j as f64 / (grid_size - 1) as f64))
            .collect()
    };
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }

    let n = sample.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, &[0x0cf]);
    order.shuffle(&mut rng);

    let mut scores = vec![0.0_f64; candidates.len()];
    for fold in 0..k {
        let held: Vec<usize> =
            order.iter().cloned().skip(fold).step_by(k).collect();
        let held_set: std::collections::HashSet<usize> = held.iter().cloned().collect();
        let train_vals: Vec<f64> = (0..n)
            .filter(|i| !held_set.contains(i))
            .map(|i| sample.values()[i])
            .collect();
        let held_vals: Vec<f64> = held.iter().map(|&i| sample.values()[i]).collect();
        let train = SampleSet::new(train_vals, sample.sigma())?;
        let held = SampleSet::new(held_vals, sample.sigma())?;
        let knots = super::pwl_knots(&train, knot_strategy);
        for (ci, &tau) in candidates.iter().enumerate() {
            let fit = super::pwl::fit_pwl_with_knots(&train, &knots, tau)?;
            scores[ci] += sure(&fit.0, &held)?.value / k as f64;
        }
    }

    let mut best = 0;
    for ci in 1..candidates.len() {
        if scores[ci] < scores[best] {
            best = ci;
        }
    }
    Ok(candidates[best])
}
