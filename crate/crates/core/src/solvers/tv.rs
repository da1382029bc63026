//! Least-squares step-rule fitting under a total-variation budget instead of
//! a monotone cone: `min ||z - d||^2` subject to `sum_k |d_{k+1} - d_k| <=
//! lambda` and `lo <= d_j <= hi`, solved as a QP with jumps split into
//! positive and negative parts.

use super::linalg::Mat;
use super::qp::{qp_solve, QpProblem, QP_DEFAULT_MAX_ITER, QP_DEFAULT_TOL};
use crate::rules::Diagnostics;
use crate::{Error, Result};

/// Unweighted fit; see [`tv_constrained_weighted`].
pub fn tv_constrained_isotonic_free(
    z: &[f64],
    lambda: f64,
    range: (f64, f64),
) -> Result<(Vec<f64>, Diagnostics)> {
    let w = vec![1.0; z.len()];
    tv_constrained_weighted(z, &w, lambda, range, QP_DEFAULT_TOL, QP_DEFAULT_MAX_ITER)
}

/// Weighted variant: minimizes `sum_j w_j (z_j - d_j)^2` under the same
/// TV-ball and box constraints.
pub fn tv_constrained_weighted(
    z: &[f64],
    weights: &[f64],
    lambda: f64,
    (lo, hi): (f64, f64),
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Diagnostics)> {
    let m = z.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty response vector".into()));
    }
    if weights.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: weights.len() });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tv responses"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    if lo > hi {
        return Err(Error::InvalidInput(format!("invalid range [{lo}, {hi}]")));
    }

    if m == 1 {
        return Ok((vec![z[0].clamp(lo, hi)], Diagnostics::converged(0)));
    }

    // variables: d (m), then u (m-1), then v (m-1) with
    // d_{k+1} - d_k = u_k - v_k, u, v >= 0, sum(u + v) <= lambda
    let nj = m - 1;
    let dim = m + 2 * nj;
    let mut q = Mat::zeros(dim, dim);
    let mut lin = vec![0.0; dim];
    for j in 0..m {
        q[(j, j)] = 2.0 * weights[j];
        lin[j] = -2.0 * weights[j] * z[j];
    }

    let mut eq = Mat::zeros(nj, dim);
    for k in 0..nj {
        eq[(k, k)] = -1.0;
        eq[(k, k + 1)] = 1.0;
        eq[(k, m + k)] = -1.0;
        eq[(k, m + nj + k)] = 1.0;
    }
    let eq_rhs = vec![0.0; nj];

    // rows: -u <= 0, -v <= 0, sum(u + v) <= lambda, d <= hi, -d <= -lo
    let n_in = 2 * nj + 1 + 2 * m;
    let mut g = Mat::zeros(n_in, dim);
    let mut g_rhs = vec![0.0; n_in];
    for k in 0..(2 * nj) {
        g[(k, m + k)] = -1.0;
    }
    for k in 0..(2 * nj) {
        g[(2 * nj, m + k)] = 1.0;
    }
    g_rhs[2 * nj] = lambda;
    for j in 0..m {
        g[(2 * nj + 1 + j, j)] = 1.0;
        g_rhs[2 * nj + 1 + j] = hi;
        g[(2 * nj + 1 + m + j, j)] = -1.0;
        g_rhs[2 * nj + 1 + m + j] = -lo;
    }

    let problem = QpProblem::new(q, lin, Some((eq, eq_rhs)), Some((g, g_rhs)))?;
    let sol = qp_solve(&problem, tol, max_iter)?;
    let d = sol.beta[..m].to_vec();
    Ok((d, sol.diagnostics))
}
