//! Independent oracles for solver verification. Everything here is
//! deliberately brute-force and shares no code with the solvers under test.

#![allow(dead_code)]

/// Solve a dense linear system by Gaussian elimination with partial
/// pivoting. Returns `None` on (near-)singularity.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut pivot = col;
        let mut best = m[col][col].abs();
        for r in (col + 1)..n {
            if m[r][col].abs() > best {
                best = m[r][col].abs();
                pivot = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in (col + 1)..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..n {
                    m[r][c] -= f * m[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    for i in (0..n).rev() {
        for c in (i + 1)..n {
            rhs[i] -= m[i][c] * rhs[c];
        }
        rhs[i] /= m[i][i];
    }
    Some(rhs)
}

/// Exhaustive active-set QP oracle:
/// minimize `0.5 x'Qx + q'x` s.t. `E x = e`, `G x <= g`.
///
/// Every subset of inequality rows is treated as active, the corresponding
/// equality-constrained KKT system solved, and the candidate kept when it is
/// primal feasible with nonnegative active multipliers. Exponential in the
/// number of inequality rows; use only on tiny instances.
pub fn enumerate_qp(
    q: &[Vec<f64>],
    lin: &[f64],
    eq: &[(Vec<f64>, f64)],
    ineq: &[(Vec<f64>, f64)],
    tol: f64,
) -> Option<Vec<f64>> {
    let n = lin.len();
    let mi = ineq.len();
    assert!(mi <= 20, "enumeration oracle limited to 2^20 subsets");
    let objective = |x: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                v += 0.5 * x[i] * q[i][j] * x[j];
            }
            v += lin[i] * x[i];
        }
        v
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    'subsets: for mask in 0u32..(1u32 << mi) {
        let active: Vec<usize> = (0..mi).filter(|i| mask & (1 << i) != 0).collect();
        let k = eq.len() + active.len();
        let dim = n + k;
        // KKT: [Q A'; A 0][x; nu] = [-q; b]
        let mut kkt = vec![vec![0.0; dim]; dim];
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            for j in 0..n {
                kkt[i][j] = q[i][j];
            }
            rhs[i] = -lin[i];
        }
        for (r, (row, b)) in eq
            .iter()
            .map(|(r, b)| (r.clone(), *b))
            .chain(active.iter().map(|&i| (ineq[i].0.clone(), ineq[i].1)))
            .enumerate()
        {
            for j in 0..n {
                kkt[n + r][j] = row[j];
                kkt[j][n + r] = row[j];
            }
            rhs[n + r] = b;
        }
        let Some(sol) = gauss_solve(&kkt, &rhs) else { continue };
        let x = &sol[..n];
        // primal feasibility of inactive rows
        for (i, (row, g)) in ineq.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let v: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            if v > g + tol {
                continue 'subsets;
            }
        }
        // dual feasibility of active inequality multipliers
        for (r, _) in active.iter().enumerate() {
            if sol[n + eq.len() + r] < -tol {
                continue 'subsets;
            }
        }
        let obj = objective(x);
        if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-15) {
            best = Some((obj, x.to_vec()));
        }
    }
    best.map(|(_, x)| x)
}

/// Direct 1-D total-variation denoising (taut-string style scan):
/// `argmin 0.5 ||z - d||^2 + gamma * sum |d_{k+1} - d_k|`.
pub fn tv_denoise(z: &[f64], gamma: f64) -> Vec<f64> {
    let n = z.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    if n == 1 || gamma <= 0.0 {
        out.copy_from_slice(z);
        return out;
    }
    // Condat's direct scan
    let (mut k, mut k0, mut kminus, mut kplus) = (0usize, 0usize, 0usize, 0usize);
    let mut vmin = z[0] - gamma;
    let mut vmax = z[0] + gamma;
    let mut umin = gamma;
    let mut umax = -gamma;
    loop {
        if k == n - 1 {
            out[k] = vmin + umin;
            break;
        }
        let next = z[k + 1];
        if next + umin < vmin - gamma {
            for v in out.iter_mut().take(kminus + 1).skip(k0) {
                *v = vmin;
            }
            k = kminus + 1;
            k0 = k;
            kminus = k;
            kplus = k;
            vmin = z[k];
            vmax = z[k] + 2.0 * gamma;
            umin = gamma;
            umax = -gamma;
        } else if next + umax > vmax + gamma {
            for v in out.iter_mut().take(kplus + 1).skip(k0) {
                *v = vmax;
            }
            k = kplus + 1;
            k0 = k;
            kminus = k;
            kplus = k;
            vmin = z[k] - 2.0 * gamma;
            vmax = z[k];
            umin = gamma;
            umax = -gamma;
        } else {
            k += 1;
            umin += next - vmin;
            umax += next - vmax;
            if umin >= gamma {
                vmin += (umin - gamma) / (k - k0 + 1) as f64;
                umin = gamma;
                kminus = k;
            }
            if umax <= -gamma {
                vmax += (umax + gamma) / (k - k0 + 1) as f64;
                umax = -gamma;
                kplus = k;
            }
        }
        if k == n - 1 {
            if umin < 0.0 {
                // negative slack: vmin was too high
                for v in out.iter_mut().take(kminus + 1).skip(k0) {
                    *v = vmin;
                }
                k = kminus + 1;
                k0 = k;
                kminus = k;
                vmin = z[k];
                umin = gamma;
                umax = z[k] + gamma - vmax;
            } else if umax > 0.0 {
                for v in out.iter_mut().take(kplus + 1).skip(k0) {
                    *v = vmax;
                }
                k = kplus + 1;
                k0 = k;
                kplus = k;
                vmax = z[k];
                umax = -gamma;
                umin = z[k] - gamma - vmin;
            } else {
                let base = vmin + umin / (k - k0 + 1) as f64;
                for v in out.iter_mut().take(k + 1).skip(k0) {
                    *v = base;
                }
                break;
            }
        }
    }
    out
}

pub fn total_variation(d: &[f64]) -> f64 {
    d.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Oracle for the TV-ball projection with a box: bisect the penalty level
/// until the (clipped) penalized solution exhausts the budget. Clipping the
/// unconstrained TV-denoised signal into the box is exact for this problem.
pub fn tv_ball_oracle(z: &[f64], lambda: f64, lo: f64, hi: f64) -> Vec<f64> {
    let clip = |d: &[f64]| -> Vec<f64> { d.iter().map(|&v| v.clamp(lo, hi)).collect() };
    let plain = clip(&tv_denoise(z, 0.0));
    if total_variation(&plain) <= lambda + 1e-12 {
        return plain;
    }
    let spread = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - z.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut g_lo = 0.0;
    let mut g_hi = spread * z.len() as f64 + 1.0;
    for _ in 0..200 {
        let g = 0.5 * (g_lo + g_hi);
        let tv = total_variation(&clip(&tv_denoise(z, g)));
        if tv > lambda {
            g_lo = g;
        } else {
            g_hi = g;
        }
    }
    clip(&tv_denoise(z, g_hi))
}

/// Finite-difference derivative of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}
