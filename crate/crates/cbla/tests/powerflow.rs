mod common;

use cbla::netio::{build_admittance, builtin, parse_case, BusKind, NetworkCase};
use cbla::powerflow::{
    branch_flows, bus_power, bus_power_jacobian, nominal_injections, solve_ac, solve_dc,
    PfOptions,
};
use common::TestRng;
use nalgebra::DVector;
use num_complex::Complex64;

const TWO_BUS: &str = "
function mpc = twobus
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0  0 0 1 1.0 0 230 1 1.1 0.9;
    2 1 0  0  0 0 1 1.0 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
    1 2 0 0.5 0 250 250 250 0 0 1 -360 360;
];
";

fn flat_start(case: &NetworkCase) -> NetworkCase {
    let mut flat = case.clone();
    for bus in &mut flat.buses {
        bus.v_mag_init = 1.0;
        bus.v_ang_init = 0.0;
    }
    flat
}

#[test]
fn zero_load_two_bus_is_flat() {
    let case = parse_case(TWO_BUS).unwrap();
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    let state = solve_ac(&case, &y, &inj, &PfOptions::default()).unwrap();
    assert!(state.converged);
    assert!(state.iterations <= 1);
    assert!((state.v_mag[1] - 1.0).abs() < 1e-10);
    assert!(state.v_ang[1].abs() < 1e-10);
    assert_eq!(state.v_ang[0], 0.0);
}

#[test]
fn case14_flat_start_matches_stored_solution() {
    let case = parse_case(builtin::CASE14).unwrap();
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    let state = solve_ac(&flat_start(&case), &y, &inj, &PfOptions::default()).unwrap();
    assert!(state.converged);
    assert!(state.iterations <= 6, "iterations = {}", state.iterations);
    for (i, bus) in case.buses.iter().enumerate() {
        assert!(
            (state.v_mag[i] - bus.v_mag_init).abs() < 1e-4,
            "bus {} vm {} vs {}",
            bus.id,
            state.v_mag[i],
            bus.v_mag_init
        );
        assert!(
            (state.v_ang[i] - bus.v_ang_init).abs() < 1e-4,
            "bus {} va",
            bus.id
        );
    }
}

#[test]
fn case6ww_converges_at_both_box_corners() {
    let case = parse_case(builtin::CASE6WW).unwrap();
    let y = build_admittance(&case).unwrap();
    for frac in [0.7, 1.3] {
        let mut scaled = case.clone();
        for bus in &mut scaled.buses {
            bus.p_load *= frac;
            bus.q_load *= frac;
        }
        let inj = nominal_injections(&scaled);
        let state = solve_ac(&scaled, &y, &inj, &PfOptions::default()).unwrap();
        assert!(state.converged, "corner x{frac}");
    }
}

#[test]
fn jacobian_matches_central_finite_differences() {
    let case = parse_case(builtin::CASE6WW).unwrap();
    let y = build_admittance(&case).unwrap().to_dense();
    let n = case.buses.len();
    let mut rng = TestRng::new(11);

    for _ in 0..10 {
        let vm: Vec<f64> = (0..n).map(|_| rng.range(0.95, 1.06)).collect();
        let va: Vec<f64> = (0..n).map(|_| rng.range(-0.15, 0.05)).collect();
        let v = DVector::from_iterator(
            n,
            vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)),
        );
        let (ds_dva, ds_dvm) = bus_power_jacobian(&y, &v);

        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for j in 0..n {
            // angle perturbation
            let perturb = |delta_a: f64, delta_m: f64| -> DVector<Complex64> {
                DVector::from_iterator(
                    n,
                    (0..n).map(|i| {
                        let m = vm[i] + if i == j { delta_m } else { 0.0 };
                        let a = va[i] + if i == j { delta_a } else { 0.0 };
                        Complex64::from_polar(m, a)
                    }),
                )
            };
            let sa_p = bus_power(&y, &perturb(h, 0.0));
            let sa_m = bus_power(&y, &perturb(-h, 0.0));
            let sm_p = bus_power(&y, &perturb(0.0, h));
            let sm_m = bus_power(&y, &perturb(0.0, -h));
            for i in 0..n {
                let fd_a = (sa_p[i] - sa_m[i]) / (2.0 * h);
                let fd_m = (sm_p[i] - sm_m[i]) / (2.0 * h);
                let scale = ds_dva[(i, j)].norm().max(ds_dvm[(i, j)].norm()).max(1.0);
                max_rel = max_rel.max((ds_dva[(i, j)] - fd_a).norm() / scale);
                max_rel = max_rel.max((ds_dvm[(i, j)] - fd_m).norm() / scale);
            }
        }
        assert!(max_rel < 1e-5, "jacobian rel err {max_rel}");
    }
}

#[test]
fn converged_state_reproduces_commanded_injections() {
    let case = parse_case(builtin::CASE24_IEEE_RTS).unwrap();
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    let state = solve_ac(&case, &y, &inj, &PfOptions::default()).unwrap();
    assert!(state.converged);
    let slack = case.slack();
    for (i, bus) in case.buses.iter().enumerate() {
        if i == slack {
            continue;
        }
        assert!((state.p_inj[i] - inj.p[i]).abs() <= 1e-8, "P at bus {}", bus.id);
        if bus.kind == BusKind::Pq {
            assert!((state.q_inj[i] - inj.q[i]).abs() <= 1e-8, "Q at bus {}", bus.id);
        }
    }
}

#[test]
fn slack_balances_injections_plus_losses() {
    let case = parse_case(builtin::CASE6WW).unwrap();
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    let state = solve_ac(&case, &y, &inj, &PfOptions::default()).unwrap();
    let flows = branch_flows(&case, &state);
    let losses: f64 = flows.iter().map(|f| f.p_from + f.p_to).sum();
    let non_slack: f64 = (0..case.buses.len())
        .filter(|&i| i != case.slack())
        .map(|i| state.p_inj[i])
        .sum();
    assert!((state.p_inj[case.slack()] + non_slack - losses).abs() < 1e-8);
    for f in &flows {
        assert!(f.p_from + f.p_to >= -1e-12, "negative branch loss");
        assert!(f.i_from_mag >= 0.0 && f.i_to_mag >= 0.0);
    }
}

#[test]
fn two_bus_branch_current_is_analytic() {
    // x = 0.1 line between 1 pu phasors 0.1 rad apart:
    // |I| = |(1 - e^{-j0.1}) / (j 0.1)|
    let mut case = parse_case(TWO_BUS).unwrap();
    case.branches[0].x = 0.1;
    let mut state_case = case.clone();
    state_case.buses[1].v_ang_init = -0.1;
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    // build a state at the prescribed phasors without solving
    let state = solve_ac(
        &state_case,
        &y,
        &inj,
        &PfOptions {
            tolerance: 1e30, // accept the warm start as-is
            max_iterations: 0,
        },
    )
    .unwrap();
    let flows = branch_flows(&case, &state);
    let expect = ((Complex64::new(1.0, 0.0)
        - Complex64::from_polar(1.0, -0.1))
        / Complex64::new(0.0, 0.1))
    .norm();
    assert!((flows[0].i_from_mag - expect).abs() < 1e-12);
    assert!((expect - 0.9996).abs() < 1e-4);
}

#[test]
fn dc_two_bus_analytic() {
    let case = parse_case(TWO_BUS).unwrap();
    let sol = solve_dc(&case, &[1.0, -1.0]).unwrap();
    assert!((sol.theta[0]).abs() < 1e-12);
    assert!((sol.theta[1] + 0.5).abs() < 1e-12);
    assert!((sol.flows[0] - 1.0).abs() < 1e-12);

    let zero = solve_dc(&case, &[0.0, 0.0]).unwrap();
    assert!(zero.theta.iter().all(|t| t.abs() < 1e-12));
}

#[test]
fn dc_flows_track_ac_flows_on_case6ww() {
    let case = parse_case(builtin::CASE6WW).unwrap();
    let y = build_admittance(&case).unwrap();
    let inj = nominal_injections(&case);
    let state = solve_ac(&case, &y, &inj, &PfOptions::default()).unwrap();
    let ac = branch_flows(&case, &state);
    // net P with losses assigned to the slack so DC injections balance
    let mut p = state.p_inj.clone();
    let total: f64 = p.iter().sum();
    p[case.slack()] -= total;
    let dc = solve_dc(&case, &p).unwrap();
    for (k, f) in ac.iter().enumerate() {
        // lightly-loaded branches are compared on an absolute 0.1 pu floor
        let rel = (dc.flows[k] - f.p_from).abs() / f.p_from.abs().max(0.1);
        assert!(rel < 0.15, "branch {k}: dc {} vs ac {}", dc.flows[k], f.p_from);
    }
}

#[test]
fn disconnected_network_is_singular_for_dc() {
    let mut case = parse_case(TWO_BUS).unwrap();
    case.branches[0].in_service = false;
    assert!(matches!(
        solve_dc(&case, &[0.0, 0.0]),
        Err(cbla::Error::SingularBMatrix)
    ));
}
