//! Log-barrier interior-point solver for linearly constrained convex
//! quadratic programs:  min 1/2 x'Hx + q'x  s.t.  Gx <= h.
//!
//! Requires a strictly feasible start; `find_interior_point` provides one
//! via a phase-1 problem. The barrier Hessian keeps Newton well posed
//! even when H is singular, provided the feasible set is bounded.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct Qp<'a> {
    pub h: &'a DMatrix<f64>,
    pub q: &'a DVector<f64>,
    pub g: &'a DMatrix<f64>,
    pub rhs: &'a DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal(DVector<f64>),
    Infeasible,
}

fn slacks(g: &DMatrix<f64>, rhs: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    rhs - g * x
}

fn centering_step(qp: &Qp, t: f64, x: &mut DVector<f64>) -> Result<()> {
    let m = qp.g.nrows();
    for _ in 0..100 {
        let s = slacks(qp.g, qp.rhs, x);
        let inv_s = s.map(|v| 1.0 / v);

        let mut grad = (qp.h * &*x + qp.q) * t;
        let mut hess = qp.h * t;
        for i in 0..m {
            let gi = qp.g.row(i).transpose();
            grad += &gi * inv_s[i];
            hess += &gi * gi.transpose() * (inv_s[i] * inv_s[i]);
        }

        let chol = hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SolverFailure("barrier Hessian not positive definite".into()))?;
        let step = chol.solve(&(-&grad));
        let decrement = -(grad.dot(&step));
        if !decrement.is_finite() {
            return Err(Error::SolverFailure("barrier step diverged".into()));
        }
        if decrement / 2.0 < 1e-12 {
            return Ok(());
        }

        // backtracking line search that stays strictly feasible
        let mut alpha = 1.0;
        let phi = |x: &DVector<f64>| -> f64 {
            let s = slacks(qp.g, qp.rhs, x);
            if s.iter().any(|&v| v <= 0.0) {
                return f64::INFINITY;
            }
            t * (0.5 * (qp.h * x).dot(x) + qp.q.dot(x)) - s.iter().map(|v| v.ln()).sum::<f64>()
        };
        let f0 = phi(x);
        let slope = grad.dot(&step);
        for _ in 0..60 {
            let cand = &*x + &step * alpha;
            if phi(&cand) <= f0 + 0.25 * alpha * slope {
                *x = cand;
                break;
            }
            alpha *= 0.5;
        }
    }
    Ok(())
}

/// Minimize from a strictly feasible `x0` until the duality gap bound
/// m/t drops below `gap_tol`.
pub fn solve_from(qp: &Qp, x0: DVector<f64>, gap_tol: f64) -> Result<DVector<f64>> {
    let s = slacks(qp.g, qp.rhs, &x0);
    if s.iter().any(|&v| v <= 0.0) {
        return Err(Error::SolverFailure("starting point not strictly feasible".into()));
    }
    let m = qp.g.nrows().max(1) as f64;
    let mut x = x0;
    let mut t = 1.0;
    while m / t >= gap_tol {
        centering_step(qp, t, &mut x)?;
        t *= 10.0;
    }
    centering_step(qp, t, &mut x)?;
    Ok(x)
}

/// Phase 1: find a strictly feasible point of Gx <= h starting anywhere,
/// by minimizing the worst violation. Returns `Infeasible` when the
/// minimal violation is nonnegative.
pub fn find_interior_point(
    g: &DMatrix<f64>,
    rhs: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<QpOutcome> {
    let s = slacks(g, rhs, x0);
    if s.iter().all(|&v| v > 1e-9) {
        return Ok(QpOutcome::Optimal(x0.clone()));
    }

    let n = g.ncols();
    let m = g.nrows();
    // variables (x, w): min w  s.t. Gx - w <= h, -w <= 1
    let mut g_ext = DMatrix::<f64>::zeros(m + 1, n + 1);
    g_ext.view_mut((0, 0), (m, n)).copy_from(g);
    for i in 0..m {
        g_ext[(i, n)] = -1.0;
    }
    g_ext[(m, n)] = -1.0;
    let mut rhs_ext = DVector::<f64>::zeros(m + 1);
    rhs_ext.rows_mut(0, m).copy_from(rhs);
    rhs_ext[m] = 1.0;

    let h_ext = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut q_ext = DVector::<f64>::zeros(n + 1);
    q_ext[n] = 1.0;

    let worst = (g * x0 - rhs).max();
    let mut start = DVector::<f64>::zeros(n + 1);
    start.rows_mut(0, n).copy_from(x0);
    start[n] = worst + 1.0;

    let qp = Qp {
        h: &h_ext,
        q: &q_ext,
        g: &g_ext,
        rhs: &rhs_ext,
    };
    let sol = solve_from(&qp, start, 1e-9)?;
    if sol[n] < -1e-9 {
        Ok(QpOutcome::Optimal(sol.rows(0, n).into_owned()))
    } else {
        Ok(QpOutcome::Infeasible)
    }
}
