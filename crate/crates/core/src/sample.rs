//! Observed samples and (benchmark-only) truth vectors.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Observed values `X_1..X_n` together with the known noise scale `sigma`.
///
/// Immutable after construction; every estimator takes a `&SampleSet`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSet {
    values: Vec<f64>,
    sigma: f64,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, sigma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("sample must contain at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample values"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { values, sigma })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Sorted view of the values with the stable original-index permutation:
    /// `sorted[k] = values[perm[k]]` and `perm` preserves input order on ties.
    pub fn sorted_with_permutation(&self) -> (Vec<f64>, Vec<usize>) {
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.sort_by(|&a, &b| self.values[a].partial_cmp(&self.values[b]).unwrap());
        let sorted = perm.iter().map(|&i| self.values[i]).collect();
        (sorted, perm)
    }

    /// Distinct sorted values with multiplicity weights. Duplicates are
    /// merged so downstream solvers see strictly increasing order statistics.
    pub fn merged_order_statistics(&self) -> (Vec<f64>, Vec<f64>) {
        let (sorted, _) = self.sorted_with_permutation();
        let mut xs: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut ws: Vec<f64> = Vec::with_capacity(sorted.len());
        for &x in &sorted {
            match xs.last() {
                Some(&last) if last == x => *ws.last_mut().unwrap() += 1.0,
                _ => {
                    xs.push(x);
                    ws.push(1.0);
                }
            }
        }
        (xs, ws)
    }
}

/// The unknown means `theta_1..theta_n`. Only the oracle rule and the
/// benchmark harness may see this.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthVector {
    thetas: Vec<f64>,
}

impl TruthVector {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::InvalidInput("truth vector must be nonempty".into()));
        }
        if thetas.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("truth vector"));
        }
        Ok(Self { thetas })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.thetas.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i |theta_i|`, the sup-norm bound that controls regret rates.
    pub fn sup_norm(&self) -> f64 {
        self.thetas.iter().fold(0.0_f64, |m, &t| m.max(t.abs()))
    }

    /// Range `max theta - min theta`.
    pub fn range(&self) -> f64 {
        self.max() - self.min()
    }
}
