//! Linear surrogate fitting: unconstrained least squares, hard
//! conservative approximations, and biased approximations under a
//! configurable asymmetric error function.

mod irls;
pub mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::errfn::{Direction, ErrorFunctionKind, ErrorFunctionSpec, InnerLoss};
use crate::error::{Error, Result};
use crate::qp;
use crate::sampling::{Dataset, QuantityId};
use simplex::LpOutcome;

/// Residuals larger than this (in the forbidden direction) count as
/// violations; matches the hard-constraint feasibility tolerance.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Fit statistics over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean |residual| per sample, in per unit.
    pub avg_error_per_sample: f64,
    /// Number of samples with a residual in the forbidden direction.
    pub violated_count: usize,
    /// Largest residual magnitude in the forbidden direction (pu).
    pub max_violation: f64,
    /// Mean penalty value of the fit's error function.
    pub objective_value: f64,
}

/// Affine surrogate gamma ~ a0 + a1'[P;Q] for one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearApproximation {
    pub quantity: QuantityId,
    pub feature_names: Vec<String>,
    pub a0: f64,
    pub a1: Vec<f64>,
    pub error_spec: ErrorFunctionSpec,
    pub fit_report: FitReport,
}

impl LinearApproximation {
    /// Evaluate the surrogate at one feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.a0
            + self
                .a1
                .iter()
                .zip(features)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

/// Design matrix [1 | X] and target column for one quantity.
fn design(data: &Dataset, quantity: &QuantityId) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let gamma = data
        .target(quantity)
        .ok_or_else(|| Error::UnknownQuantity(quantity.to_string()))?;
    let m = data.sample_count();
    let p = data.feature_count();
    let x = DMatrix::from_fn(m, p + 1, |i, j| if j == 0 { 1.0 } else { data.x[(i, j - 1)] });
    Ok((x, DVector::from_column_slice(gamma)))
}

fn check_alignment(approx: &LinearApproximation, data: &Dataset) -> Result<()> {
    if approx.feature_names != data.feature_names {
        return Err(Error::FeatureMismatch {
            model: approx.feature_names.join(","),
            data: data.feature_names.join(","),
        });
    }
    Ok(())
}

/// Residuals e_m = gamma_m - (a0 + a1'x_m); positive means the surrogate
/// under-estimates the quantity.
pub fn residuals(approx: &LinearApproximation, data: &Dataset) -> Result<Vec<f64>> {
    check_alignment(approx, data)?;
    let gamma = data
        .target(&approx.quantity)
        .ok_or_else(|| Error::UnknownQuantity(approx.quantity.to_string()))?;
    Ok((0..data.sample_count())
        .map(|m| {
            let row: Vec<f64> = (0..data.feature_count()).map(|j| data.x[(m, j)]).collect();
            gamma[m] - approx.predict(&row)
        })
        .collect())
}

fn make_report(eps: &[f64], spec: &ErrorFunctionSpec) -> FitReport {
    let m = eps.len().max(1) as f64;
    let avg = eps.iter().map(|e| e.abs()).sum::<f64>() / m;
    let (violated, max_violation) = eps.iter().fold((0usize, 0.0f64), |(n, mx), &e| {
        let v = match spec.direction {
            Direction::Over => e,
            Direction::Under => -e,
        };
        if v > VIOLATION_TOL {
            (n + 1, mx.max(v))
        } else {
            (n, mx)
        }
    });
    let objective = eps
        .iter()
        .map(|&e| {
            // tolerate solver-precision violations of hard constraints
            if matches!(spec.kind, ErrorFunctionKind::HardConservative { .. }) {
                let v = match spec.direction {
                    Direction::Over => e,
                    Direction::Under => -e,
                };
                if v > 0.0 && v <= VIOLATION_TOL {
                    return spec.eval(0.0);
                }
            }
            spec.eval(e)
        })
        .sum::<f64>()
        / m;
    FitReport {
        avg_error_per_sample: avg,
        violated_count: violated,
        max_violation,
        objective_value: objective,
    }
}

fn finish(
    data: &Dataset,
    quantity: QuantityId,
    spec: ErrorFunctionSpec,
    coeffs: &DVector<f64>,
) -> Result<LinearApproximation> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::SolverFailure("non-finite coefficients".into()));
    }
    let mut approx = LinearApproximation {
        quantity,
        feature_names: data.feature_names.clone(),
        a0: coeffs[0],
        a1: coeffs.iter().skip(1).copied().collect(),
        error_spec: spec,
        fit_report: FitReport {
            avg_error_per_sample: 0.0,
            violated_count: 0,
            max_violation: 0.0,
            objective_value: 0.0,
        },
    };
    let eps = residuals(&approx, data)?;
    approx.fit_report = make_report(&eps, &spec);
    Ok(approx)
}

/// Plain least-squares fit with no conservativeness bias.
pub fn fit_least_squares(data: &Dataset, quantity: QuantityId) -> Result<LinearApproximation> {
    let (x, y) = design(data, &quantity)?;
    let a = irls::fit_quadratic(&x, &y, 1.0, 1.0)?;
    finish(
        data,
        quantity,
        ErrorFunctionSpec::over_quadratic(1.0),
        &a,
    )
}

/// Hard-constrained conservative fit: every training residual lies on
/// the conservative side.
pub fn fit_cla(
    data: &Dataset,
    quantity: QuantityId,
    direction: Direction,
    inner_loss: InnerLoss,
) -> Result<LinearApproximation> {
    let (x, y) = design(data, &quantity)?;
    let m = x.nrows();
    let n = x.ncols();
    if m < n {
        eprintln!(
            "warning: fitting {n}-coefficient model from only {m} samples; \
             the constrained fit may be degenerate"
        );
    }
    let spec = ErrorFunctionSpec {
        kind: ErrorFunctionKind::HardConservative { inner_loss },
        direction,
    };

    let coeffs = match inner_loss {
        InnerLoss::L1 => {
            // LP over a = a+ - a-, slack s = |e| >= 0:
            //   OVER:  x'a - s = gamma; UNDER: x'a + s = gamma
            let s_sign = match direction {
                Direction::Over => -1.0,
                Direction::Under => 1.0,
            };
            let cols = 2 * n + m;
            let mut a_lp = DMatrix::<f64>::zeros(m, cols);
            a_lp.view_mut((0, 0), (m, n)).copy_from(&x);
            a_lp.view_mut((0, n), (m, n)).copy_from(&(-&x));
            for i in 0..m {
                a_lp[(i, 2 * n + i)] = s_sign;
            }
            let b: Vec<f64> = y.iter().copied().collect();
            let mut c = vec![0.0; cols];
            for v in c.iter_mut().skip(2 * n) {
                *v = 1.0 / m as f64;
            }
            match simplex::solve(&a_lp, &b, &c)? {
                LpOutcome::Optimal(sol) => DVector::from_fn(n, |j, _| sol.x[j] - sol.x[n + j]),
                LpOutcome::Infeasible => {
                    return Err(Error::SolverFailure("conservative fit LP infeasible".into()))
                }
                LpOutcome::Unbounded => {
                    return Err(Error::SolverFailure("conservative fit LP unbounded".into()))
                }
            }
        }
        InnerLoss::L2 => {
            // QP: min (1/M)|y - Xa|^2  s.t.  e <= 0 (OVER) or e >= 0 (UNDER)
            let (g, h) = match direction {
                Direction::Over => (-&x, -&y),
                Direction::Under => (x.clone(), y.clone()),
            };
            let hess = x.transpose() * &x * (2.0 / m as f64);
            let q = x.transpose() * &y * (-2.0 / m as f64);
            let mut start = DVector::<f64>::zeros(n);
            start[0] = match direction {
                Direction::Over => y.max() + 1.0,
                Direction::Under => y.min() - 1.0,
            };
            let qp = qp::Qp {
                h: &hess,
                q: &q,
                g: &g,
                rhs: &h,
            };
            qp::solve_from(&qp, start, 1e-12)?
        }
    };
    finish(data, quantity, spec, &coeffs)
}

/// Fit under an arbitrary built-in error function, dispatching to the
/// LP path for piecewise-linear penalties and smooth solvers otherwise.
pub fn fit_cbla(
    data: &Dataset,
    quantity: QuantityId,
    spec: ErrorFunctionSpec,
) -> Result<LinearApproximation> {
    spec.validate()?;
    match spec.kind {
        ErrorFunctionKind::PiecewiseLinear { k1, k2 } => {
            let mut fitted = fit_cbla_lp(data, quantity, k1, k2)?;
            // keep the caller's declared direction in the metadata
            fitted.error_spec = spec;
            let eps = residuals(&fitted, data)?;
            fitted.fit_report = make_report(&eps, &spec);
            Ok(fitted)
        }
        ErrorFunctionKind::PiecewiseQuadratic { alpha_neg, alpha_pos } => {
            let (x, y) = design(data, &quantity)?;
            let a = irls::fit_quadratic(&x, &y, alpha_neg, alpha_pos)?;
            finish(data, quantity, spec, &a)
        }
        ErrorFunctionKind::ExpPenalty { scale, rate } => {
            let (x, y) = design(data, &quantity)?;
            let a = irls::fit_exp(&x, &y, scale, rate, spec.direction)?;
            finish(data, quantity, spec, &a)
        }
        ErrorFunctionKind::HardConservative { inner_loss } => {
            fit_cla(data, quantity, spec.direction, inner_loss)
        }
    }
}

/// Exact LP fit of the pinball penalty max(k1 e, k2 e), k1 <= 0 <= k2.
pub fn fit_cbla_lp(
    data: &Dataset,
    quantity: QuantityId,
    k1: f64,
    k2: f64,
) -> Result<LinearApproximation> {
    if k1 > 0.0 || k2 < 0.0 || (k1 == 0.0 && k2 == 0.0) {
        return Err(Error::UnboundedLP);
    }
    let direction = if k2 >= -k1 {
        Direction::Over
    } else {
        Direction::Under
    };
    let spec = ErrorFunctionSpec::pinball(k1, k2, direction);

    let (x, y) = design(data, &quantity)?;
    let m = x.nrows();
    let n = x.ncols();
    // variables [a+, a-, u, v] with e = u - v: X(a+ - a-) + u - v = gamma
    let cols = 2 * n + 2 * m;
    let mut a_lp = DMatrix::<f64>::zeros(m, cols);
    a_lp.view_mut((0, 0), (m, n)).copy_from(&x);
    a_lp.view_mut((0, n), (m, n)).copy_from(&(-&x));
    for i in 0..m {
        a_lp[(i, 2 * n + i)] = 1.0;
        a_lp[(i, 2 * n + m + i)] = -1.0;
    }
    let b: Vec<f64> = y.iter().copied().collect();
    let mut c = vec![0.0; cols];
    for i in 0..m {
        c[2 * n + i] = k2 / m as f64;
        c[2 * n + m + i] = -k1 / m as f64;
    }
    // with a = 0 the rows read u - v = gamma: pick u or v by sign for a
    // feasible identity starting basis, skipping phase 1 entirely
    let basis: Vec<usize> = (0..m)
        .map(|i| if y[i] >= 0.0 { 2 * n + i } else { 2 * n + m + i })
        .collect();
    let coeffs = match simplex::solve_with_basis(&a_lp, &b, &c, basis)? {
        LpOutcome::Optimal(sol) => DVector::from_fn(n, |j, _| sol.x[j] - sol.x[n + j]),
        LpOutcome::Unbounded => return Err(Error::UnboundedLP),
        LpOutcome::Infeasible => {
            return Err(Error::SolverFailure("pinball LP reported infeasible".into()))
        }
    };
    finish(data, quantity, spec, &coeffs)
}

/// Recompute fit statistics on an arbitrary (training or holdout)
/// dataset.
pub fn evaluate(approx: &LinearApproximation, data: &Dataset) -> Result<FitReport> {
    let eps = residuals(approx, data)?;
    Ok(make_report(&eps, &approx.error_spec))
}

/// One over-biased quadratic fit per alpha, reporting the
/// accuracy/conservativeness trade-off curve.
pub fn sweep_alpha(
    data: &Dataset,
    quantity: QuantityId,
    alphas: &[f64],
) -> Result<Vec<(f64, FitReport)>> {
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if alpha < 1.0 {
            return Err(Error::NonConvexSpec(format!(
                "alpha sweep requires alpha >= 1, got {alpha}"
            )));
        }
        let fit = fit_cbla(data, quantity, ErrorFunctionSpec::over_quadratic(alpha))?;
        out.push((alpha, fit.fit_report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Dataset with one feature column x and target gamma.
    fn toy_dataset(xs: &[f64], gamma: &[f64]) -> Dataset {
        Dataset {
            feature_names: vec!["pd:2".into()],
            x: DMatrix::from_column_slice(xs.len(), 1, xs),
            targets: vec![(QuantityId::VBus(2), gamma.to_vec())],
            discarded: 0,
            warnings: vec![],
        }
    }

    fn multi_dataset(x: DMatrix<f64>, gamma: Vec<f64>) -> Dataset {
        let names = (0..x.ncols()).map(|j| format!("pd:{}", j + 2)).collect();
        Dataset {
            feature_names: names,
            x,
            targets: vec![(QuantityId::PSlack, gamma)],
            discarded: 0,
            warnings: vec![],
        }
    }

    #[test]
    fn residual_sign_convention() {
        let data = toy_dataset(&[0.0, 1.0], &[1.0, 2.0]);
        let approx = LinearApproximation {
            quantity: QuantityId::VBus(2),
            feature_names: vec!["pd:2".into()],
            a0: 0.0,
            a1: vec![0.0],
            error_spec: ErrorFunctionSpec::over_quadratic(1.0),
            fit_report: FitReport {
                avg_error_per_sample: 0.0,
                violated_count: 0,
                max_violation: 0.0,
                objective_value: 0.0,
            },
        };
        // zero surrogate: residual equals gamma (under-estimates)
        assert_eq!(residuals(&approx, &data).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn affine_target_recovered_exactly() {
        let xs = [0.0, 0.5, 1.0, 1.5, 2.0];
        let gamma: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let data = toy_dataset(&xs, &gamma);
        for direction in [Direction::Over, Direction::Under] {
            for loss in [InnerLoss::L1, InnerLoss::L2] {
                let fit = fit_cla(&data, QuantityId::VBus(2), direction, loss).unwrap();
                assert_abs_diff_eq!(fit.a0, 3.0, epsilon = 1e-5);
                assert_abs_diff_eq!(fit.a1[0], -2.0, epsilon = 1e-5);
                assert_eq!(fit.fit_report.violated_count, 0);
            }
        }
    }

    #[test]
    fn over_cla_on_parabola_matches_enumerated_optimum() {
        // gamma = x^2 at x in {-1, 0, 1}; the l1-optimal over-estimator is
        // the line through (-1,1) and (1,1): a0 = 1, a1 = 0, mean |e| = 1/3
        let data = toy_dataset(&[-1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]);
        let fit = fit_cla(&data, QuantityId::VBus(2), Direction::Over, InnerLoss::L1).unwrap();
        assert_abs_diff_eq!(fit.a0, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.a1[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.fit_report.avg_error_per_sample, 1.0 / 3.0, epsilon = 1e-9);
        assert_eq!(fit.fit_report.violated_count, 0);
    }

    #[test]
    fn symmetric_quadratic_cbla_is_ols() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * (j + 3) + 7) % 13) as f64 / 13.0);
        let gamma: Vec<f64> = (0..30)
            .map(|i| 0.4 + 0.9 * x[(i, 0)] - 1.3 * x[(i, 1)] + 0.05 * ((i % 5) as f64 - 2.0))
            .collect();
        let data = multi_dataset(x.clone(), gamma.clone());
        let fit = fit_cbla(&data, QuantityId::PSlack, ErrorFunctionSpec::over_quadratic(1.0))
            .unwrap();

        let xd = DMatrix::from_fn(30, 3, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let y = DVector::from_vec(gamma);
        let ols = (xd.transpose() * &xd)
            .cholesky()
            .unwrap()
            .solve(&(xd.transpose() * &y));
        assert_abs_diff_eq!(fit.a0, ols[0], epsilon = 1e-8);
        assert_abs_diff_eq!(fit.a1[0], ols[1], epsilon = 1e-8);
        assert_abs_diff_eq!(fit.a1[1], ols[2], epsilon = 1e-8);
    }

    #[test]
    fn symmetric_pinball_is_least_absolute_deviations() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let gamma = [0.0, 1.2, 1.9, 3.3, 3.9];
        let data = toy_dataset(&xs, &gamma);
        let fit = fit_cbla_lp(&data, QuantityId::VBus(2), -1.0, 1.0).unwrap();
        // objective equals mean |e| of the returned fit
        assert_abs_diff_eq!(
            fit.fit_report.objective_value,
            fit.fit_report.avg_error_per_sample,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lp_and_smooth_pinball_paths_agree() {
        let x = DMatrix::from_fn(25, 2, |i, j| (((i + 1) * (j + 2)) % 11) as f64 / 11.0);
        let gamma: Vec<f64> = (0..25)
            .map(|i| 1.0 + x[(i, 0)] - 0.5 * x[(i, 1)] + 0.1 * ((i % 7) as f64 - 3.0))
            .collect();
        let data = multi_dataset(x, gamma);
        let lp = fit_cbla_lp(&data, QuantityId::PSlack, -0.3, 2.0).unwrap();
        let generic = fit_cbla(
            &data,
            QuantityId::PSlack,
            ErrorFunctionSpec::pinball(-0.3, 2.0, Direction::Over),
        )
        .unwrap();
        assert_abs_diff_eq!(
            lp.fit_report.objective_value,
            generic.fit_report.objective_value,
            epsilon = 1e-7
        );
    }

    #[test]
    fn invalid_pinball_signs_are_rejected() {
        let data = toy_dataset(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(
            fit_cbla_lp(&data, QuantityId::VBus(2), 0.0, 0.0),
            Err(Error::UnboundedLP)
        ));
        assert!(matches!(
            fit_cbla_lp(&data, QuantityId::VBus(2), 0.5, 1.0),
            Err(Error::UnboundedLP)
        ));
    }

    #[test]
    fn shift_equivariance_lp_and_quadratic() {
        let xs = [0.1, 0.4, 0.9, 1.3, 1.8, 2.2, 2.9];
        let gamma = [0.3, 0.1, 0.8, 0.9, 1.7, 1.4, 2.2];
        let shifted: Vec<f64> = gamma.iter().map(|g| g + 5.0).collect();
        let base = toy_dataset(&xs, &gamma);
        let moved = toy_dataset(&xs, &shifted);

        let lp0 = fit_cbla_lp(&base, QuantityId::VBus(2), -1.0, 4.0).unwrap();
        let lp1 = fit_cbla_lp(&moved, QuantityId::VBus(2), -1.0, 4.0).unwrap();
        assert_abs_diff_eq!(lp1.a0 - lp0.a0, 5.0, epsilon = 1e-7);
        assert_abs_diff_eq!(lp1.a1[0], lp0.a1[0], epsilon = 1e-7);

        let q0 = fit_cbla(&base, QuantityId::VBus(2), ErrorFunctionSpec::over_quadratic(50.0))
            .unwrap();
        let q1 = fit_cbla(&moved, QuantityId::VBus(2), ErrorFunctionSpec::over_quadratic(50.0))
            .unwrap();
        assert_abs_diff_eq!(q1.a0 - q0.a0, 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(q1.a1[0], q0.a1[0], epsilon = 1e-6);
    }

    #[test]
    fn alpha_sweep_trades_accuracy_for_conservativeness() {
        let x = DMatrix::from_fn(60, 1, |i, _| i as f64 / 59.0 * 4.0);
        let gamma: Vec<f64> = (0..60).map(|i| (x[(i, 0)] - 2.0).powi(2)).collect();
        let data = multi_dataset(x, gamma);
        let sweep =
            sweep_alpha(&data, QuantityId::PSlack, &[1.0, 10.0, 100.0, 1000.0, 10000.0]).unwrap();
        for pair in sweep.windows(2) {
            assert!(pair[1].1.violated_count <= pair[0].1.violated_count);
            assert!(
                pair[1].1.avg_error_per_sample >= pair[0].1.avg_error_per_sample - 1e-9
            );
        }
        assert!(sweep_alpha(&data, QuantityId::PSlack, &[0.5]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let data = toy_dataset(&[0.0, 1.0, 2.0], &[0.1, 1.2, 1.8]);
        let fit = fit_cbla_lp(&data, QuantityId::VBus(2), -1.0, 3.0).unwrap();
        let text = serde_json::to_string(&fit).unwrap();
        let back: LinearApproximation = serde_json::from_str(&text).unwrap();
        assert_eq!(back.a0, fit.a0);
        assert_eq!(back.a1, fit.a1);
        assert_eq!(back.quantity, fit.quantity);
    }
}
