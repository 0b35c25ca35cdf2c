//! Smooth-path fitters: iteratively reweighted least squares for the
//! asymmetric quadratic family and damped Newton for the exponential
//! penalty.

use nalgebra::{DMatrix, DVector};

use crate::errfn::Direction;
use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-8;
const MAX_ROUNDS: usize = 200;

/// Solve min || W^1/2 (y - X a) ||^2 via normal equations, falling back
/// to SVD when the weighted Gram matrix is not positive definite.
fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = x.nrows();
    let mut xtw = x.transpose();
    for i in 0..m {
        let mut col = xtw.column_mut(i);
        col *= w[i];
    }
    let gram = &xtw * x;
    let rhs = &xtw * y;
    if let Some(chol) = gram.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    // rank-deficient weighting: minimum-norm solution of W^1/2 X a = W^1/2 y
    let sqrt_w = w.map(f64::sqrt);
    let mut xs = x.clone();
    for i in 0..m {
        let mut row = xs.row_mut(i);
        row *= sqrt_w[i];
    }
    let ys = y.component_mul(&sqrt_w);
    xs.svd(true, true)
        .solve(&ys, 1e-12)
        .map_err(|e| Error::SolverFailure(format!("weighted least squares: {e}")))
}

/// Fit min (1/M) sum w(e_m) e_m^2 with w = alpha_neg for e <= 0 and
/// alpha_pos otherwise, e = y - X a. IRLS with backtracking damping,
/// terminating at gradient 2-norm <= 1e-8 or 200 rounds.
pub fn fit_quadratic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha_neg: f64,
    alpha_pos: f64,
) -> Result<DVector<f64>> {
    let m = x.nrows() as f64;
    let weights = |e: &DVector<f64>| -> DVector<f64> {
        e.map(|v| if v <= 0.0 { alpha_neg } else { alpha_pos })
    };
    let objective = |e: &DVector<f64>| -> f64 {
        e.iter()
            .map(|&v| if v <= 0.0 { alpha_neg * v * v } else { alpha_pos * v * v })
            .sum::<f64>()
            / m
    };

    let mut a = weighted_least_squares(x, y, &DVector::from_element(x.nrows(), 1.0))?;
    for _ in 0..MAX_ROUNDS {
        let e = y - x * &a;
        let w = weights(&e);
        let grad = x.transpose() * w.component_mul(&e) * (-2.0 / m);
        if grad.norm() <= GRAD_TOL {
            return Ok(a);
        }

        let target = weighted_least_squares(x, y, &w)?;
        let f0 = objective(&e);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &a * (1.0 - step) + &target * step;
            if objective(&(y - x * &cand)) < f0 - 1e-16 {
                a = cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent direction left: we are at the minimizer up to
            // floating-point resolution
            return Ok(a);
        }
    }
    let grad = x.transpose() * weights(&(y - x * &a)).component_mul(&(y - x * &a)) * (-2.0 / m);
    if grad.norm() <= GRAD_TOL * 10.0 {
        Ok(a)
    } else {
        Err(Error::SolverFailure(format!(
            "quadratic fit stalled at gradient norm {:.3e}",
            grad.norm()
        )))
    }
}

/// Fit the exponential penalty: |v| on the conservative side and
/// scale*(exp(rate*v)-1) on the violating side, with v the residual
/// oriented so that positive means violation. The conservative-side
/// absolute value is smoothed by mu = 1e-8 so damped Newton applies.
pub fn fit_exp(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    scale: f64,
    rate: f64,
    direction: Direction,
) -> Result<DVector<f64>> {
    let m = x.nrows() as f64;
    let sign = match direction {
        Direction::Over => 1.0,
        Direction::Under => -1.0,
    };
    let mu = 1e-8_f64;

    let value = |v: f64| -> f64 {
        if v > 0.0 {
            scale * ((rate * v).min(40.0).exp() - 1.0)
        } else {
            (v * v + mu * mu).sqrt() - mu
        }
    };
    let d1 = |v: f64| -> f64 {
        if v > 0.0 {
            scale * rate * (rate * v).min(40.0).exp()
        } else {
            v / (v * v + mu * mu).sqrt()
        }
    };
    let d2 = |v: f64| -> f64 {
        if v > 0.0 {
            scale * rate * rate * (rate * v).min(40.0).exp()
        } else {
            let s = (v * v + mu * mu).sqrt();
            mu * mu / (s * s * s)
        }
    };
    let objective =
        |e: &DVector<f64>| -> f64 { e.iter().map(|&ei| value(sign * ei)).sum::<f64>() / m };

    let n = x.ncols();
    // start from a fully conservative shift of the least-squares fit so
    // no residual begins in the steep (possibly clipped) exponential zone
    let mut a = weighted_least_squares(x, y, &DVector::from_element(x.nrows(), 1.0))?;
    let worst = (y - x * &a).iter().fold(0.0f64, |acc, &e| acc.max(sign * e));
    a[0] += sign * worst;
    for _ in 0..MAX_ROUNDS {
        let e = y - x * &a;
        // d obj / d a = (1/M) sum f'(v_m) * sign * (-x_m)
        let mut grad = DVector::<f64>::zeros(n);
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for i in 0..x.nrows() {
            let v = sign * e[i];
            let xi = x.row(i).transpose();
            grad += &xi * (-sign * d1(v) / m);
            hess += &xi * xi.transpose() * (d2(v) / m);
        }
        if grad.norm() <= GRAD_TOL {
            return Ok(a);
        }
        for i in 0..n {
            hess[(i, i)] += 1e-12;
        }
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::SolverFailure("exp-penalty Hessian not PD".into()))?
            .solve(&(-&grad));

        let f0 = objective(&e);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &a + &step * t;
            if objective(&(y - x * &cand)) <= f0 + 0.25 * t * slope {
                a = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return Ok(a);
        }
    }
    Ok(a)
}
