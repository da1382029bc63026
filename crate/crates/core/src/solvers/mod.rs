//! Optimization substrate: weighted isotonic regression, linear-penalty
//! absorption, a small dense QP solver, and the TV-constrained step-rule
//! solver built on it.

mod absorb;
mod linalg;
mod pava;
mod qp;
mod tv;

pub use absorb::{absorb_linear_penalty, absorb_linear_penalty_weighted};
pub use linalg::Mat;
pub use pava::{pava, IsotonicProblem};
pub use qp::{qp_solve, QpProblem, QpSolution, QP_DEFAULT_MAX_ITER, QP_DEFAULT_TOL};
pub use tv::{tv_constrained_isotonic_free, tv_constrained_weighted};
