//! Error-function library for conservative bias fits.
//!
//! A spec describes f(e) = g(e) for e <= 0 and h(e) for e > 0, where the
//! residual e > 0 means the surrogate under-estimates the true quantity.
//! All built-in penalties are nonnegative with f(0) = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which residual sign the approximation is biased against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Surrogate should over-estimate: positive residuals are violations.
    Over,
    /// Surrogate should under-estimate: negative residuals are violations.
    Under,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerLoss {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorFunctionKind {
    /// f(e) = max(k1 e, k2 e) with k1 <= 0 <= k2 (pinball / check loss).
    PiecewiseLinear { k1: f64, k2: f64 },
    /// f(e) = alpha_neg e^2 for e <= 0, alpha_pos e^2 otherwise.
    PiecewiseQuadratic { alpha_neg: f64, alpha_pos: f64 },
    /// |e| on the conservative side, scale*(exp(rate*|e|)-1) on the
    /// violating side; the exponent input is clipped at 40.
    ExpPenalty { scale: f64, rate: f64 },
    /// Infinite penalty for violations, inner loss otherwise (the hard
    /// conservative constraint expressed as an error function).
    HardConservative { inner_loss: InnerLoss },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunctionSpec {
    #[serde(flatten)]
    pub kind: ErrorFunctionKind,
    pub direction: Direction,
}

impl ErrorFunctionSpec {
    /// Quadratic family g = e^2, h = alpha e^2 biased to over-estimate.
    pub fn over_quadratic(alpha: f64) -> Self {
        ErrorFunctionSpec {
            kind: ErrorFunctionKind::PiecewiseQuadratic {
                alpha_neg: 1.0,
                alpha_pos: alpha,
            },
            direction: Direction::Over,
        }
    }

    /// Mirrored quadratic family biased to under-estimate.
    pub fn under_quadratic(alpha: f64) -> Self {
        ErrorFunctionSpec {
            kind: ErrorFunctionKind::PiecewiseQuadratic {
                alpha_neg: alpha,
                alpha_pos: 1.0,
            },
            direction: Direction::Under,
        }
    }

    pub fn pinball(k1: f64, k2: f64, direction: Direction) -> Self {
        ErrorFunctionSpec {
            kind: ErrorFunctionKind::PiecewiseLinear { k1, k2 },
            direction,
        }
    }

    /// Check convexity and sign conventions of the built-in kinds.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ErrorFunctionKind::PiecewiseLinear { k1, k2 } => {
                if k1 > 0.0 || k2 < 0.0 {
                    return Err(Error::NonConvexSpec(format!(
                        "piecewise-linear needs k1 <= 0 <= k2, got k1={k1}, k2={k2}"
                    )));
                }
                if k1 == 0.0 && k2 == 0.0 {
                    return Err(Error::NonConvexSpec("k1 = k2 = 0 has zero loss everywhere".into()));
                }
            }
            ErrorFunctionKind::PiecewiseQuadratic { alpha_neg, alpha_pos } => {
                if alpha_neg < 0.0 || alpha_pos < 0.0 || (alpha_neg == 0.0 && alpha_pos == 0.0) {
                    return Err(Error::NonConvexSpec(format!(
                        "quadratic weights must be nonnegative and not both zero, got ({alpha_neg}, {alpha_pos})"
                    )));
                }
            }
            ErrorFunctionKind::ExpPenalty { scale, rate } => {
                if scale <= 0.0 || rate <= 0.0 {
                    return Err(Error::NonConvexSpec(format!(
                        "exp penalty needs positive scale and rate, got ({scale}, {rate})"
                    )));
                }
            }
            ErrorFunctionKind::HardConservative { .. } => {}
        }
        Ok(())
    }

    /// Penalty value at residual `e`. `HardConservative` returns infinity
    /// on the forbidden side.
    pub fn eval(&self, e: f64) -> f64 {
        // residual sign in the violating direction
        let v = match self.direction {
            Direction::Over => e,
            Direction::Under => -e,
        };
        match self.kind {
            ErrorFunctionKind::PiecewiseLinear { k1, k2 } => f64::max(k1 * e, k2 * e),
            ErrorFunctionKind::PiecewiseQuadratic { alpha_neg, alpha_pos } => {
                if e <= 0.0 {
                    alpha_neg * e * e
                } else {
                    alpha_pos * e * e
                }
            }
            ErrorFunctionKind::ExpPenalty { scale, rate } => {
                if v <= 0.0 {
                    -v
                } else {
                    scale * ((rate * v).min(40.0).exp() - 1.0)
                }
            }
            ErrorFunctionKind::HardConservative { inner_loss } => {
                if v > 0.0 {
                    f64::INFINITY
                } else {
                    match inner_loss {
                        InnerLoss::L1 => -v,
                        InnerLoss::L2 => v * v,
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_is_free() {
        let specs = [
            ErrorFunctionSpec::pinball(-1.0, 3.0, Direction::Over),
            ErrorFunctionSpec::over_quadratic(100.0),
            ErrorFunctionSpec::under_quadratic(10.0),
            ErrorFunctionSpec {
                kind: ErrorFunctionKind::ExpPenalty { scale: 1.0, rate: 2.0 },
                direction: Direction::Over,
            },
            ErrorFunctionSpec {
                kind: ErrorFunctionKind::HardConservative { inner_loss: InnerLoss::L1 },
                direction: Direction::Under,
            },
        ];
        for spec in specs {
            spec.validate().unwrap();
            assert_eq!(spec.eval(0.0), 0.0, "{spec:?}");
        }
    }

    #[test]
    fn over_spec_penalizes_violations_at_least_as_hard() {
        let specs = [
            ErrorFunctionSpec::pinball(-1.0, 5.0, Direction::Over),
            ErrorFunctionSpec::over_quadratic(100.0),
            ErrorFunctionSpec {
                kind: ErrorFunctionKind::ExpPenalty { scale: 1.0, rate: 2.0 },
                direction: Direction::Over,
            },
        ];
        for spec in specs {
            for e in [1e-3, 0.1, 0.5, 2.0] {
                assert!(spec.eval(e) >= spec.eval(-e), "{spec:?} at {e}");
            }
        }
    }

    #[test]
    fn under_mirrors_over() {
        let over = ErrorFunctionSpec::over_quadratic(7.0);
        let under = ErrorFunctionSpec::under_quadratic(7.0);
        for e in [-0.3, -0.01, 0.0, 0.02, 1.5] {
            assert_eq!(over.eval(e), under.eval(-e));
        }
    }

    #[test]
    fn exp_penalty_clips_large_arguments() {
        let spec = ErrorFunctionSpec {
            kind: ErrorFunctionKind::ExpPenalty { scale: 1.0, rate: 2.0 },
            direction: Direction::Over,
        };
        assert!(spec.eval(1e6).is_finite());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(ErrorFunctionSpec::pinball(0.5, 1.0, Direction::Over)
            .validate()
            .is_err());
        assert!(ErrorFunctionSpec::pinball(0.0, 0.0, Direction::Over)
            .validate()
            .is_err());
        assert!(ErrorFunctionSpec {
            kind: ErrorFunctionKind::ExpPenalty { scale: -1.0, rate: 2.0 },
            direction: Direction::Over,
        }
        .validate()
        .is_err());
    }
}
