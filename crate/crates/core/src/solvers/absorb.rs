//! Absorbing the linear jump penalty into the least-squares responses.
//!
//! For a step rule with values `d_1..d_n` at sorted observations and knots
//! between consecutive order statistics,
//!
//! ```text
//! ||x - d||^2 + 2 n sigma^2 sum_k f_k (d_{k+1} - d_k)
//!     = ||z - d||^2 + const,    z_i = x_i + n sigma^2 (f_i - f_{i-1}),
//! ```
//!
//! with `f_0 = f_n = 0`. The sign convention is pinned by the identity check
//! in the test suite: the absorbed objective must match the direct penalized
//! objective up to a `d`-free constant.

use crate::{Error, Result};

/// Modified responses for the unweighted problem (distinct sorted `x`).
pub fn absorb_linear_penalty(
    sorted_x: &[f64],
    knot_densities: &[f64],
    sigma: f64,
) -> Result<Vec<f64>> {
    let n = sorted_x.len();
    let weights = vec![1.0; n];
    absorb_linear_penalty_weighted(sorted_x, &weights, knot_densities, n as f64, sigma)
}

/// Weighted variant used after merging duplicate observations: node `j` has
/// multiplicity `weights[j]` and the squared-error term is
/// `sum_j w_j (x_j - d_j)^2`, while the penalty keeps the original total
/// count `n_total` in front. The shift then divides by the node weight:
/// `z_j = x_j + (n_total sigma^2 / w_j)(f_j - f_{j-1})`.
pub fn absorb_linear_penalty_weighted(
    sorted_x: &[f64],
    weights: &[f64],
    knot_densities: &[f64],
    n_total: f64,
    sigma: f64,
) -> Result<Vec<f64>> {
    let m = sorted_x.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty response vector".into()));
    }
    if weights.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: weights.len() });
    }
    if knot_densities.len() + 1 != m {
        return Err(Error::LengthMismatch { expected: m - 1, got: knot_densities.len() });
    }
    if sorted_x.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("responses must be strictly increasing (merge duplicates first)".into()));
    }
    let s2 = sigma * sigma;
    let mut z = Vec::with_capacity(m);
    for j in 0..m {
        let f_left = if j == 0 { 0.0 } else { knot_densities[j - 1] };
        let f_right = if j == m - 1 { 0.0 } else { knot_densities[j] };
        z.push(sorted_x[j] + n_total * s2 * (f_right - f_left) / weights[j]);
    }
    Ok(z)
}
