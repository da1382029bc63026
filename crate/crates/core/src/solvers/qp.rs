//! Small dense convex QP solver.
//!
//! Minimizes `0.5 x' Q x + q' x` subject to `E x = e` and `G x <= g` by
//! operator splitting (scaled ADMM with over-relaxation) followed by an
//! active-set polish that solves the KKT system of the detected active
//! constraints. The contract is the residual bound: primal and dual
//! residuals at the returned point are `<= tol`, or the solution is flagged
//! as non-converged. Deterministic given its inputs.

use super::linalg::{Cholesky, Lu, Mat};
use crate::rules::Diagnostics;
use crate::{Error, Result};

pub const QP_DEFAULT_TOL: f64 = 1e-8;
pub const QP_DEFAULT_MAX_ITER: usize = 50_000;

const SIGMA_REG: f64 = 1e-6;
const ALPHA: f64 = 1.6;
const RHO_EQ_SCALE: f64 = 1e3;
const CHECK_EVERY: usize = 25;
const RHO_UPDATE_EVERY: usize = 100;

/// Dense QP data: symmetric PSD quadratic `q`, linear term `lin`, optional
/// equality system `E x = e` and inequality system `G x <= g`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub q: Mat,
    pub lin: Vec<f64>,
    pub eq: Option<(Mat, Vec<f64>)>,
    pub ineq: Option<(Mat, Vec<f64>)>,
}

impl QpProblem {
    pub fn new(
        q: Mat,
        lin: Vec<f64>,
        eq: Option<(Mat, Vec<f64>)>,
        ineq: Option<(Mat, Vec<f64>)>,
    ) -> Result<Self> {
        let n = lin.len();
        if q.rows() != n || q.cols() != n {
            return Err(Error::LengthMismatch { expected: n, got: q.rows() });
        }
        if !q.is_symmetric(1e-12) {
            return Err(Error::InvalidInput("quadratic matrix must be symmetric".into()));
        }
        for (mat, rhs, what) in [(&eq, "equality"), (&ineq, "inequality")]
            .iter()
            .filter_map(|(sys, what)| sys.as_ref().map(|(m, r)| (m, r, *what)))
        {
            if mat.cols() != n {
                return Err(Error::InvalidInput(format!("{what} matrix has wrong column count")));
            }
            if mat.rows() != rhs.len() {
                return Err(Error::LengthMismatch { expected: mat.rows(), got: rhs.len() });
            }
        }
        Ok(Self { q, lin, eq, ineq })
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let qx = self.q.mul_vec(x);
        0.5 * dot(x, &qx) + dot(&self.lin, x)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub beta: Vec<f64>,
    /// Multipliers for the stacked `[E; G]` rows (signs: equality free,
    /// inequality nonnegative).
    pub multipliers: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}

struct Stacked {
    a: Mat,
    l: Vec<f64>,
    u: Vec<f64>,
    n_eq: usize,
}

fn stack(problem: &QpProblem) -> Stacked {
    let n = problem.dim();
    let n_eq = problem.eq.as_ref().map_or(0, |(m, _)| m.rows());
    let n_in = problem.ineq.as_ref().map_or(0, |(m, _)| m.rows());
    let mut a = Mat::zeros(n_eq + n_in, n);
    let mut l = vec![0.0; n_eq + n_in];
    let mut u = vec![0.0; n_eq + n_in];
    if let Some((e, rhs)) = &problem.eq {
        for i in 0..n_eq {
            a.row_mut(i).copy_from_slice(e.row(i));
            l[i] = rhs[i];
            u[i] = rhs[i];
        }
    }
    if let Some((g, rhs)) = &problem.ineq {
        for i in 0..n_in {
            a.row_mut(n_eq + i).copy_from_slice(g.row(i));
            l[n_eq + i] = f64::NEG_INFINITY;
            u[n_eq + i] = rhs[i];
        }
    }
    Stacked { a, l, u, n_eq }
}

fn kkt_matrix(q: &Mat, rho: &[f64], a: &Mat) -> Mat {
    let n = q.cols();
    let mut m = q.clone();
    for i in 0..n {
        m[(i, i)] += SIGMA_REG;
    }
    for r in 0..a.rows() {
        let row = a.row(r).to_vec();
        let rr = rho[r];
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            let s = rr * row[i];
            for j in 0..n {
                m[(i, j)] += s * row[j];
            }
        }
    }
    m
}

fn residuals(problem: &QpProblem, a: &Mat, x: &[f64], z: &[f64], y: &[f64]) -> (f64, f64) {
    let ax = a.mul_vec(x);
    let rp = ax.iter().zip(z).map(|(&v, &zi)| (v - zi).abs()).fold(0.0_f64, f64::max);
    let mut rd = problem.q.mul_vec(x);
    for (rdi, &li) in rd.iter_mut().zip(&problem.lin) {
        *rdi += li;
    }
    let aty = a.tr_mul_vec(y);
    for (rdi, &ai) in rd.iter_mut().zip(&aty) {
        *rdi += ai;
    }
    (rp, inf_norm(&rd))
}

/// Active-set polish: solve the equality-constrained KKT system for the
/// detected active rows, with a tiny ridge and iterative refinement toward
/// the unregularized system. Returns `(x, y_full, rp, rd, min_mult)`.
fn polish(
    problem: &QpProblem,
    stacked: &Stacked,
    x_admm: &[f64],
    y_admm: &[f64],
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>, f64, f64)> {
    let n = problem.dim();
    let a = &stacked.a;
    let m_rows = a.rows();
    let ax = a.mul_vec(x_admm);
    let eps_act = (tol * 100.0).max(1e-9);

    let mut active: Vec<usize> = (0..stacked.n_eq).collect();
    for i in stacked.n_eq..m_rows {
        let near = stacked.u[i] - ax[i] <= eps_act * (1.0 + stacked.u[i].abs());
        if near || y_admm[i] > eps_act {
            active.push(i);
        }
    }

    for _attempt in 0..3 {
        let k = active.len();
        let dim = n + k;
        let mut kkt = Mat::zeros(dim, dim);
        const RIDGE: f64 = 1e-11;
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = problem.q[(i, j)];
            }
            kkt[(i, i)] += RIDGE;
        }
        for (r, &row_idx) in active.iter().enumerate() {
            for j in 0..n {
                let v = a[(row_idx, j)];
                kkt[(n + r, j)] = v;
                kkt[(j, n + r)] = v;
            }
            kkt[(n + r, n + r)] = -RIDGE;
        }
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[i] = -problem.lin[i];
        }
        for (r, &row_idx) in active.iter().enumerate() {
            rhs[n + r] = stacked.u[row_idx];
        }
        let lu = Lu::new(&kkt)?;
        let mut sol = lu.solve(&rhs);
        // refine toward the unregularized KKT system
        for _ in 0..3 {
            let mut resid = vec![0.0; dim];
            for i in 0..n {
                let mut v = -problem.lin[i];
                for j in 0..n {
                    v -= problem.q[(i, j)] * sol[j];
                }
                for (r, &row_idx) in active.iter().enumerate() {
                    v -= a[(row_idx, i)] * sol[n + r];
                }
                resid[i] = v;
            }
            for (r, &row_idx) in active.iter().enumerate() {
                let mut v = stacked.u[row_idx];
                for j in 0..n {
                    v -= a[(row_idx, j)] * sol[j];
                }
                resid[n + r] = v;
            }
            let delta = lu.solve(&resid);
            for (s, d) in sol.iter_mut().zip(&delta) {
                *s += d;
            }
        }

        let x = &sol[..n];
        // negative multipliers on active inequality rows mean the active set
        // was too large; drop them and retry
        let mut drop_any = false;
        let mut next_active = Vec::with_capacity(k);
        for (r, &row_idx) in active.iter().enumerate() {
            let nu = sol[n + r];
            if row_idx >= stacked.n_eq && nu < -eps_act {
                drop_any = true;
            } else {
                next_active.push(row_idx);
            }
        }
        if drop_any {
            active = next_active;
            continue;
        }

        let mut y_full = vec![0.0; m_rows];
        for (r, &row_idx) in active.iter().enumerate() {
            y_full[row_idx] = if row_idx >= stacked.n_eq { sol[n + r].max(0.0) } else { sol[n + r] };
        }
        let ax = a.mul_vec(x);
        let z: Vec<f64> = ax
            .iter()
            .zip(stacked.l.iter().zip(&stacked.u))
            .map(|(&v, (&lo, &hi))| v.clamp(lo, hi))
            .collect();
        let (rp, rd) = residuals(problem, a, x, &z, &y_full);
        return Some((x.to_vec(), y_full, rp, rd));
    }
    None
}

/// Solve the QP; returns a flagged (never silently wrong) solution when the
/// residuals stall above `tol`.
pub fn qp_solve(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let n = problem.dim();
    let stacked = stack(problem);
    let m_rows = stacked.a.rows();

    // Unconstrained: direct normal-equations solve.
    if m_rows == 0 {
        let x = match Cholesky::new(&problem.q) {
            Some(ch) => ch.solve(&problem.lin.iter().map(|v| -v).collect::<Vec<_>>()),
            None => {
                let mut reg = problem.q.clone();
                for i in 0..n {
                    reg[(i, i)] += 1e-12;
                }
                let lu = Lu::new(&reg)
                    .ok_or_else(|| Error::Solver("singular unconstrained system".into()))?;
                lu.solve(&problem.lin.iter().map(|v| -v).collect::<Vec<_>>())
            }
        };
        let mut grad = problem.q.mul_vec(&x);
        for (g, &l) in grad.iter_mut().zip(&problem.lin) {
            *g += l;
        }
        let rd = inf_norm(&grad);
        return Ok(QpSolution {
            beta: x,
            multipliers: Vec::new(),
            diagnostics: Diagnostics {
                iterations: 1,
                primal_residual: 0.0,
                dual_residual: rd,
                converged: rd <= tol,
                notes: Vec::new(),
            },
        });
    }

    let mut rho_base: f64 = 0.1;
    let make_rho = |base: f64| -> Vec<f64> {
        (0..m_rows)
            .map(|i| if i < stacked.n_eq { base * RHO_EQ_SCALE } else { base })
            .collect()
    };
    let mut rho = make_rho(rho_base);
    let mut chol = Cholesky::new(&kkt_matrix(&problem.q, &rho, &stacked.a))
        .ok_or_else(|| Error::Solver("ADMM normal matrix not positive definite".into()))?;

    let mut x = vec![0.0; n];
    let mut z: Vec<f64> = stacked
        .l
        .iter()
        .zip(&stacked.u)
        .map(|(&lo, &hi)| 0.0_f64.clamp(lo, hi))
        .collect();
    let mut y = vec![0.0; m_rows];

    let mut iterations = 0;
    let mut best: Option<(Vec<f64>, Vec<f64>, f64, f64)> = None;

    while iterations < max_iter {
        iterations += 1;

        // x-update: (Q + sigma I + A' R A) x~ = sigma x - lin + A'(R z - y)
        let mut rhs: Vec<f64> = x.iter().map(|&xi| SIGMA_REG * xi).collect();
        for (r, &l) in rhs.iter_mut().zip(&problem.lin) {
            *r -= l;
        }
        let rz_y: Vec<f64> = (0..m_rows).map(|i| rho[i] * z[i] - y[i]).collect();
        let at = stacked.a.tr_mul_vec(&rz_y);
        for (r, &v) in rhs.iter_mut().zip(&at) {
            *r += v;
        }
        let xt = chol.solve(&rhs);
        let zt = stacked.a.mul_vec(&xt);

        for i in 0..n {
            x[i] = ALPHA * xt[i] + (1.0 - ALPHA) * x[i];
        }
        for i in 0..m_rows {
            let zr = ALPHA * zt[i] + (1.0 - ALPHA) * z[i];
            let znew = (zr + y[i] / rho[i]).clamp(stacked.l[i], stacked.u[i]);
            y[i] += rho[i] * (zr - znew);
            z[i] = znew;
        }

        if iterations % CHECK_EVERY == 0 || iterations == max_iter {
            let (rp, rd) = residuals(problem, &stacked.a, &x, &z, &y);
            if best.as_ref().map_or(true, |b| rp.max(rd) < b.2.max(b.3)) {
                best = Some((x.clone(), y.clone(), rp, rd));
            }
            // try to finish via polish once ADMM is roughly converged
            if rp <= tol.max(1e-6) && rd <= tol.max(1e-6) {
                if let Some((px, py, prp, prd)) = polish(problem, &stacked, &x, &y, tol) {
                    if prp <= tol && prd <= tol {
                        return Ok(QpSolution {
                            beta: px,
                            multipliers: py,
                            diagnostics: Diagnostics {
                                iterations,
                                primal_residual: prp,
                                dual_residual: prd,
                                converged: true,
                                notes: vec!["polished".into()],
                            },
                        });
                    }
                }
                if rp <= tol && rd <= tol {
                    return Ok(QpSolution {
                        beta: x,
                        multipliers: y,
                        diagnostics: Diagnostics {
                            iterations,
                            primal_residual: rp,
                            dual_residual: rd,
                            converged: true,
                            notes: Vec::new(),
                        },
                    });
                }
            }
            if iterations % RHO_UPDATE_EVERY == 0 && rp > 0.0 && rd > 0.0 {
                let ratio = (rp / rd).sqrt().clamp(1e-4, 1e4);
                if ratio > 5.0 || ratio < 0.2 {
                    rho_base = (rho_base * ratio).clamp(1e-6, 1e6);
                    rho = make_rho(rho_base);
                    chol = Cholesky::new(&kkt_matrix(&problem.q, &rho, &stacked.a))
                        .ok_or_else(|| Error::Solver("ADMM normal matrix not positive definite".into()))?;
                }
            }
        }
    }

    // max_iter reached: last polish attempt on the best iterate, then flag.
    let (bx, by, brp, brd) = best.unwrap_or((x, y, f64::INFINITY, f64::INFINITY));
    if let Some((px, py, prp, prd)) = polish(problem, &stacked, &bx, &by, tol) {
        if prp <= tol && prd <= tol {
            return Ok(QpSolution {
                beta: px,
                multipliers: py,
                diagnostics: Diagnostics {
                    iterations,
                    primal_residual: prp,
                    dual_residual: prd,
                    converged: true,
                    notes: vec!["polished at iteration limit".into()],
                },
            });
        }
    }
    Ok(QpSolution {
        beta: bx,
        multipliers: by,
        diagnostics: Diagnostics {
            iterations,
            primal_residual: brp,
            dual_residual: brd,
            converged: false,
            notes: vec![format!("residuals stalled above tol={tol:e}")],
        },
    })
}
