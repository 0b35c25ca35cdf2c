//! Simplified optimal power flow: cost-minimizing active dispatch under
//! either lossless DC balance or fitted linear voltage/slack surrogates,
//! with an AC feasibility audit of the returned operating point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::errfn::Direction;
use crate::error::{Error, Result};
use crate::netio::{AdmittanceMatrix, BusKind, NetworkCase};
use crate::powerflow::{nominal_injections, solve_ac, PfOptions};
use crate::qp::{self, QpOutcome};
use crate::regression::LinearApproximation;
use crate::sampling::QuantityId;

/// Fitted surrogate set driving the linearized constraints: one
/// over-estimating model per upper voltage bound, one under-estimating
/// model per lower bound, and a slack active-power model closing the
/// balance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CblaModels {
    pub over_v: Vec<LinearApproximation>,
    pub under_v: Vec<LinearApproximation>,
    pub slack: LinearApproximation,
}

impl CblaModels {
    /// Sort a flat model list into the over/under/slack roles.
    pub fn from_models(models: Vec<LinearApproximation>) -> Result<CblaModels> {
        let mut over_v = Vec::new();
        let mut under_v = Vec::new();
        let mut slack = None;
        for m in models {
            match (m.quantity, m.error_spec.direction) {
                (QuantityId::PSlack, _) => slack = Some(m),
                (QuantityId::VBus(_), Direction::Over) => over_v.push(m),
                (QuantityId::VBus(_), Direction::Under) => under_v.push(m),
                (q, _) => {
                    return Err(Error::MissingModel(format!(
                        "quantity {q} has no role in the voltage-constrained dispatch"
                    )))
                }
            }
        }
        let slack = slack.ok_or_else(|| Error::MissingModel("pslack".into()))?;
        Ok(CblaModels {
            over_v,
            under_v,
            slack,
        })
    }

    fn find(list: &[LinearApproximation], bus: u32) -> Option<&LinearApproximation> {
        list.iter().find(|m| m.quantity == QuantityId::VBus(bus))
    }
}

#[derive(Debug, Clone)]
pub enum ConstraintModel {
    Dc,
    Cbla(CblaModels),
}

#[derive(Debug, Clone)]
pub struct OpfProblem {
    pub case: NetworkCase,
    pub model: ConstraintModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpfStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub ac_converged: bool,
    /// Worst bound violation over load-bus voltage magnitudes, pu.
    pub max_v_violation: f64,
    pub violated_buses: Vec<u32>,
    /// Percent cost gap vs a supplied reference objective.
    pub cost_gap_vs_reference: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    pub status: OpfStatus,
    /// Active dispatch per generator (aligned with the case's generator
    /// list), in per unit. Zero for out-of-service units.
    pub dispatch: Vec<f64>,
    /// Total generation cost in the cost curves' units.
    pub objective_value: f64,
    pub audit: Option<AuditReport>,
}

/// Total cost of a per-generator active dispatch (pu).
pub fn dispatch_cost(case: &NetworkCase, dispatch: &[f64]) -> f64 {
    case.generators
        .iter()
        .zip(&case.gen_costs)
        .zip(dispatch)
        .filter(|((g, _), _)| g.in_service)
        .map(|((_, cost), &p)| cost.eval_mw(p * case.base_power))
        .sum()
}

/// Linear inequality system G x <= h over a shared feature ordering.
#[derive(Debug, Clone)]
pub struct LinearConstraints {
    pub feature_names: Vec<String>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub labels: Vec<String>,
}

/// Assemble the voltage-bound and slack-limit inequalities from fitted
/// models: over_V(x) <= v_max and under_V(x) >= v_min per load bus, plus
/// slack generation limits through the slack surrogate.
pub fn build_cbla_constraints(
    case: &NetworkCase,
    models: &CblaModels,
) -> Result<LinearConstraints> {
    let feature_names = models.slack.feature_names.clone();
    let all = models
        .over_v
        .iter()
        .chain(models.under_v.iter())
        .chain(std::iter::once(&models.slack));
    for m in all {
        if m.feature_names != feature_names {
            return Err(Error::FeatureMismatch {
                model: m.feature_names.join(","),
                data: feature_names.join(","),
            });
        }
    }

    let k = feature_names.len();
    let mut rows: Vec<(Vec<f64>, f64, String)> = Vec::new();
    for bus in &case.buses {
        if bus.kind != BusKind::Pq {
            continue;
        }
        if bus.v_max.is_finite() && bus.v_max > 0.0 {
            let m = CblaModels::find(&models.over_v, bus.id)
                .ok_or_else(|| Error::MissingModel(format!("v:{} (over)", bus.id)))?;
            rows.push((m.a1.clone(), bus.v_max - m.a0, format!("v:{} <= vmax", bus.id)));
        }
        if bus.v_min > 0.0 {
            let m = CblaModels::find(&models.under_v, bus.id)
                .ok_or_else(|| Error::MissingModel(format!("v:{} (under)", bus.id)))?;
            let neg: Vec<f64> = m.a1.iter().map(|c| -c).collect();
            rows.push((neg, m.a0 - bus.v_min, format!("v:{} >= vmin", bus.id)));
        }
    }

    let slack_bus = case.slack();
    let slack_gen = case
        .generators
        .iter()
        .find(|g| g.in_service && g.bus == slack_bus)
        .ok_or_else(|| Error::MissingModel("slack generator".into()))?;
    let sm = &models.slack;
    rows.push((
        sm.a1.clone(),
        slack_gen.p_max - sm.a0,
        "pslack <= pmax".into(),
    ));
    rows.push((
        sm.a1.iter().map(|c| -c).collect(),
        sm.a0 - slack_gen.p_min,
        "pslack >= pmin".into(),
    ));

    let g = DMatrix::from_fn(rows.len(), k, |i, j| rows[i].0[j]);
    let h = DVector::from_fn(rows.len(), |i, _| rows[i].1);
    let labels = rows.into_iter().map(|r| r.2).collect();
    Ok(LinearConstraints {
        feature_names,
        g,
        h,
        labels,
    })
}

/// Map feature names like `pg:4` / `pg:4u1` to generator indices.
fn feature_generators(case: &NetworkCase, names: &[String]) -> Result<Vec<usize>> {
    let bad = |n: &str| Error::MissingModel(format!("feature `{n}` is not a generator injection"));
    names
        .iter()
        .map(|name| {
            let rest = name.strip_prefix("pg:").ok_or_else(|| bad(name))?;
            let (bus_txt, ord) = match rest.split_once('u') {
                Some((b, o)) => (b, o.parse::<usize>().map_err(|_| bad(name))?),
                None => (rest, 0),
            };
            let bus_id: u32 = bus_txt.parse().map_err(|_| bad(name))?;
            let bus = case.bus_index(bus_id).ok_or_else(|| bad(name))?;
            case.generators
                .iter()
                .enumerate()
                .filter(|(_, g)| g.in_service && g.bus == bus && g.p_set != 0.0)
                .map(|(i, _)| i)
                .nth(ord)
                .ok_or_else(|| bad(name))
        })
        .collect()
}

fn infeasible(case: &NetworkCase) -> OpfSolution {
    OpfSolution {
        status: OpfStatus::Infeasible,
        dispatch: vec![0.0; case.generators.len()],
        objective_value: 0.0,
        audit: None,
    }
}

/// Equal-marginal-cost dispatch under lossless balance: with unit
/// voltages, no losses, and no line limits, the DC-constrained OPF
/// reduces to economic dispatch over the generator boxes.
fn solve_dc_opf(case: &NetworkCase) -> Result<OpfSolution> {
    let base = case.base_power;
    let demand_mw: f64 = case.buses.iter().map(|b| b.p_load).sum::<f64>() * base;
    let gens: Vec<usize> = (0..case.generators.len())
        .filter(|&g| case.generators[g].in_service)
        .collect();
    let bounds: Vec<(f64, f64)> = gens
        .iter()
        .map(|&g| {
            (
                case.generators[g].p_min * base,
                case.generators[g].p_max * base,
            )
        })
        .collect();

    let pmin_sum: f64 = bounds.iter().map(|b| b.0).sum();
    let pmax_sum: f64 = bounds.iter().map(|b| b.1).sum();
    if demand_mw < pmin_sum - 1e-9 || demand_mw > pmax_sum + 1e-9 {
        return Ok(infeasible(case));
    }

    let at_lambda = |lambda: f64| -> Vec<f64> {
        gens.iter()
            .zip(&bounds)
            .map(|(&g, &(lo, hi))| {
                let c = &case.gen_costs[g];
                if c.c2 > 0.0 {
                    ((lambda - c.c1) / (2.0 * c.c2)).clamp(lo, hi)
                } else if lambda < c.c1 {
                    lo
                } else {
                    hi
                }
            })
            .collect()
    };
    let marginal = |g: usize, p_mw: f64| -> f64 {
        let c = &case.gen_costs[g];
        2.0 * c.c2 * p_mw + c.c1
    };

    let mut lo = gens
        .iter()
        .zip(&bounds)
        .map(|(&g, b)| marginal(g, b.0))
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = gens
        .iter()
        .zip(&bounds)
        .map(|(&g, b)| marginal(g, b.1))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at_lambda(mid).iter().sum::<f64>() < demand_mw {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let mut p = at_lambda(lambda);

    // distribute any residual (from linear-cost steps or bisection
    // resolution) across marginal units
    let mut mismatch = demand_mw - p.iter().sum::<f64>();
    if mismatch.abs() > 1e-9 {
        for (i, &g) in gens.iter().enumerate() {
            if (marginal(g, p[i]) - lambda).abs() > 1e-6 * lambda.abs().max(1.0) {
                continue;
            }
            let room = if mismatch > 0.0 {
                bounds[i].1 - p[i]
            } else {
                bounds[i].0 - p[i]
            };
            let take = if mismatch > 0.0 {
                mismatch.min(room)
            } else {
                mismatch.max(room)
            };
            p[i] += take;
            mismatch -= take;
            if mismatch.abs() <= 1e-9 {
                break;
            }
        }
    }
    if mismatch.abs() > 1e-6 {
        return Err(Error::SolverFailure(format!(
            "dispatch balance residual {mismatch:.3e} MW"
        )));
    }

    let mut dispatch = vec![0.0; case.generators.len()];
    for (i, &g) in gens.iter().enumerate() {
        dispatch[g] = p[i] / base;
    }
    let objective = dispatch_cost(case, &dispatch);
    Ok(OpfSolution {
        status: OpfStatus::Optimal,
        dispatch,
        objective_value: objective,
        audit: None,
    })
}

fn solve_cbla_opf(case: &NetworkCase, models: &CblaModels) -> Result<OpfSolution> {
    let base = case.base_power;
    let cons = build_cbla_constraints(case, models)?;
    let k = cons.feature_names.len();
    let gen_of = feature_generators(case, &cons.feature_names)?;

    // decision box: the surrogates' sampled operating range intersected
    // with the generator limits
    let mut g_rows = cons.g.clone();
    let mut h_rows = cons.h.clone();
    let extra = 2 * k;
    let (m0, _) = g_rows.shape();
    g_rows = g_rows.insert_rows(m0, extra, 0.0);
    h_rows = h_rows.insert_rows(m0, extra, 0.0);
    for (j, &g) in gen_of.iter().enumerate() {
        let gen = &case.generators[g];
        let lo = (0.7 * gen.p_set).max(gen.p_min);
        let hi = (1.3 * gen.p_set).min(gen.p_max);
        if lo > hi {
            return Ok(infeasible(case));
        }
        g_rows[(m0 + 2 * j, j)] = 1.0;
        h_rows[m0 + 2 * j] = hi;
        g_rows[(m0 + 2 * j + 1, j)] = -1.0;
        h_rows[m0 + 2 * j + 1] = -lo;
    }

    // quadratic cost in the decision variables plus the slack surrogate
    let sm = &models.slack;
    let slack_bus = case.slack();
    let slack_gen = case
        .generators
        .iter()
        .position(|g| g.in_service && g.bus == slack_bus)
        .ok_or_else(|| Error::MissingModel("slack generator".into()))?;
    let mut hess = DMatrix::<f64>::zeros(k, k);
    let mut q = DVector::<f64>::zeros(k);
    for (j, &g) in gen_of.iter().enumerate() {
        let c = &case.gen_costs[g];
        hess[(j, j)] += 2.0 * c.c2 * base * base;
        q[j] += c.c1 * base;
    }
    let cs = &case.gen_costs[slack_gen];
    let a1 = DVector::from_column_slice(&sm.a1);
    hess += &a1 * a1.transpose() * (2.0 * cs.c2 * base * base);
    q += &a1 * (2.0 * cs.c2 * base * base * sm.a0 + cs.c1 * base);

    let x0 = DVector::from_fn(k, |j, _| case.generators[gen_of[j]].p_set);
    let start = match qp::find_interior_point(&g_rows, &h_rows, &x0)? {
        QpOutcome::Optimal(x) => x,
        QpOutcome::Infeasible => return Ok(infeasible(case)),
    };
    let qp_problem = qp::Qp {
        h: &hess,
        q: &q,
        g: &g_rows,
        rhs: &h_rows,
    };
    let x = qp::solve_from(&qp_problem, start, 1e-9)?;

    let mut dispatch = vec![0.0; case.generators.len()];
    for (g, gen) in case.generators.iter().enumerate() {
        if gen.in_service {
            dispatch[g] = gen.p_set;
        }
    }
    for (j, &g) in gen_of.iter().enumerate() {
        dispatch[g] = x[j];
    }
    let xs: Vec<f64> = x.iter().copied().collect();
    dispatch[slack_gen] = sm.predict(&xs);
    let objective = dispatch_cost(case, &dispatch);
    Ok(OpfSolution {
        status: OpfStatus::Optimal,
        dispatch,
        objective_value: objective,
        audit: None,
    })
}

/// Solve the dispatch problem under the configured constraint model.
/// Infeasibility is a reported status, not an error.
pub fn solve_opf(problem: &OpfProblem) -> Result<OpfSolution> {
    match &problem.model {
        ConstraintModel::Dc => solve_dc_opf(&problem.case),
        ConstraintModel::Cbla(models) => solve_cbla_opf(&problem.case, models),
    }
}

/// Re-solve the full AC equations at the dispatched injections and check
/// the load-bus voltage bounds the linear models were meant to protect.
pub fn audit_ac(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    solution: &OpfSolution,
    reference_cost: Option<f64>,
) -> Result<AuditReport> {
    let slack_bus = case.slack();
    let mut audited = case.clone();
    for (g, gen) in audited.generators.iter_mut().enumerate() {
        if gen.in_service && gen.bus != slack_bus {
            gen.p_set = solution.dispatch[g];
        }
    }
    let inj = nominal_injections(&audited);
    let state = solve_ac(&audited, y, &inj, &PfOptions::default())?;

    let mut max_v_violation = 0.0f64;
    let mut violated_buses = Vec::new();
    if state.converged {
        for (i, bus) in audited.buses.iter().enumerate() {
            if bus.kind != BusKind::Pq {
                continue;
            }
            let v = state.v_mag[i];
            let over = (v - bus.v_max).max(0.0);
            let under = (bus.v_min - v).max(0.0);
            let worst = over.max(under);
            if worst > 0.0 {
                violated_buses.push(bus.id);
                max_v_violation = max_v_violation.max(worst);
            }
        }
    }
    let cost_gap_vs_reference = reference_cost
        .map(|r| (solution.objective_value - r) / r * 100.0);
    Ok(AuditReport {
        ac_converged: state.converged,
        max_v_violation,
        violated_buses,
        cost_gap_vs_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netio::{builtin, parse_case};
    use approx::assert_abs_diff_eq;

    fn case6() -> NetworkCase {
        parse_case(builtin::CASE6WW).unwrap()
    }

    #[test]
    fn dc_dispatch_balances_demand() {
        let case = case6();
        let sol = solve_dc_opf(&case).unwrap();
        assert_eq!(sol.status, OpfStatus::Optimal);
        let total: f64 = sol.dispatch.iter().sum();
        let demand: f64 = case.buses.iter().map(|b| b.p_load).sum();
        assert_abs_diff_eq!(total, demand, epsilon = 1e-8);
        for (g, gen) in case.generators.iter().enumerate() {
            assert!(sol.dispatch[g] >= gen.p_min - 1e-9);
            assert!(sol.dispatch[g] <= gen.p_max + 1e-9);
        }
        // equal marginal cost across interior units
        let mc: Vec<f64> = case
            .generators
            .iter()
            .enumerate()
            .filter(|(g, gen)| {
                sol.dispatch[*g] > gen.p_min + 1e-6 && sol.dispatch[*g] < gen.p_max - 1e-6
            })
            .map(|(g, _)| {
                let c = &case.gen_costs[g];
                2.0 * c.c2 * sol.dispatch[g] * case.base_power + c.c1
            })
            .collect();
        for pair in mc.windows(2) {
            assert_abs_diff_eq!(pair[0], pair[1], epsilon = 1e-6);
        }
    }

    #[test]
    fn dc_dispatch_is_deterministic() {
        let case = case6();
        let a = solve_dc_opf(&case).unwrap();
        let b = solve_dc_opf(&case).unwrap();
        assert_eq!(a.objective_value.to_bits(), b.objective_value.to_bits());
        assert_eq!(a.dispatch, b.dispatch);
    }

    #[test]
    fn impossible_demand_reports_infeasible() {
        let mut case = case6();
        case.buses[3].p_load = 100.0; // 10 GW on a 6-bus system
        let sol = solve_dc_opf(&case).unwrap();
        assert_eq!(sol.status, OpfStatus::Infeasible);
    }

    #[test]
    fn audit_of_nominal_dispatch_matches_direct_bound_check() {
        let case = case6();
        let y = crate::netio::build_admittance(&case).unwrap();
        let dispatch: Vec<f64> = case.generators.iter().map(|g| g.p_set).collect();
        let sol = OpfSolution {
            status: OpfStatus::Optimal,
            dispatch,
            objective_value: 0.0,
            audit: None,
        };
        let audit = audit_ac(&case, &y, &sol, None).unwrap();
        assert!(audit.ac_converged);
        // the stored solved point is inside the voltage band
        assert_eq!(audit.max_v_violation, 0.0);
        assert!(audit.violated_buses.is_empty());
    }

    #[test]
    fn missing_voltage_model_is_reported() {
        let case = case6();
        let slack = LinearApproximation {
            quantity: QuantityId::PSlack,
            feature_names: vec!["pg:2".into(), "pg:3".into()],
            a0: 1.0,
            a1: vec![-1.0, -1.0],
            error_spec: crate::errfn::ErrorFunctionSpec::over_quadratic(1.0),
            fit_report: crate::regression::FitReport {
                avg_error_per_sample: 0.0,
                violated_count: 0,
                max_violation: 0.0,
                objective_value: 0.0,
            },
        };
        let models = CblaModels {
            over_v: vec![],
            under_v: vec![],
            slack,
        };
        match build_cbla_constraints(&case, &models) {
            Err(Error::MissingModel(msg)) => assert!(msg.starts_with("v:"), "{msg}"),
            other => panic!("expected MissingModel, got {other:?}"),
        }
    }
}
