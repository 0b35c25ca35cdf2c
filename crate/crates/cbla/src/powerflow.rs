//! Nonlinear AC power flow (Newton-Raphson), derived branch quantities
//! and the linear DC power flow baseline.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netio::{AdmittanceMatrix, BusKind, NetworkCase};

#[derive(Debug, Clone, Copy)]
pub struct PfOptions {
    /// Infinity-norm mismatch tolerance in per-unit.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tolerance: 1e-8,
            max_iterations: 20,
        }
    }
}

/// Net P,Q injection per bus (generation minus load), per-unit.
/// P at the slack bus and Q at PV buses are ignored by the solver.
#[derive(Debug, Clone)]
pub struct Injections {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Net injections implied by the case's own load and generator columns.
pub fn nominal_injections(case: &NetworkCase) -> Injections {
    let n = case.buses.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (i, bus) in case.buses.iter().enumerate() {
        p[i] -= bus.p_load;
        q[i] -= bus.q_load;
    }
    for gen in case.generators.iter().filter(|g| g.in_service) {
        p[gen.bus] += gen.p_set;
        q[gen.bus] += gen.q_set;
    }
    Injections { p, q }
}

#[derive(Debug, Clone)]
pub struct PowerFlowState {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    /// Net injections computed from the solved voltages, all buses.
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
}

impl PowerFlowState {
    pub fn complex_voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Active power produced by the slack generator (injection plus the
    /// local load).
    pub fn slack_generation(&self, case: &NetworkCase) -> f64 {
        let s = case.slack();
        self.p_inj[s] + case.buses[s].p_load
    }
}

/// Complex bus power S = diag(V) * conj(Y V).
pub fn bus_power(y: &DMatrix<Complex64>, v: &DVector<Complex64>) -> DVector<Complex64> {
    let i = y * v;
    DVector::from_iterator(v.len(), v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()))
}

/// Partial derivatives of the complex bus power with respect to voltage
/// angles and magnitudes (polar coordinates), as dense matrices.
pub fn bus_power_jacobian(
    y: &DMatrix<Complex64>,
    v: &DVector<Complex64>,
) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = v.len();
    let i_bus = y * v;
    let v_norm = DVector::from_iterator(n, v.iter().map(|vk| vk / vk.norm()));

    let diag = |d: &DVector<Complex64>| DMatrix::from_diagonal(d);
    let d_v = diag(v);
    let d_i = diag(&i_bus);
    let d_vn = diag(&v_norm);

    let ds_dva = (&d_v * (&d_i - y * &d_v).conjugate()).map(|e| e * Complex64::i());
    let ds_dvm = &d_v * (y * &d_vn).conjugate() + d_i.conjugate() * &d_vn;
    (ds_dva, ds_dvm)
}

/// Solve the AC power flow by Newton's method in polar coordinates.
///
/// PV and slack buses hold their voltage setpoints; the slack angle is
/// pinned to zero. Non-convergence within `max_iterations` is reported in
/// the returned state, not as an error.
pub fn solve_ac(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    injections: &Injections,
    options: &PfOptions,
) -> Result<PowerFlowState> {
    let n = case.buses.len();
    let slack = case.slack();
    let y_dense = y.to_dense();

    let pv: Vec<usize> = (0..n)
        .filter(|&i| i != slack && case.buses[i].kind == BusKind::Pv)
        .collect();
    let pq: Vec<usize> = (0..n)
        .filter(|&i| i != slack && case.buses[i].kind == BusKind::Pq)
        .collect();
    let pvpq: Vec<usize> = pv.iter().chain(pq.iter()).copied().collect();

    // warm start from the stored voltage columns; fixed magnitudes at
    // slack and PV buses come from the generator setpoints
    let mut v_mag: Vec<f64> = case.buses.iter().map(|b| b.v_mag_init).collect();
    let mut v_ang: Vec<f64> = case.buses.iter().map(|b| b.v_ang_init).collect();
    let slack_shift = v_ang[slack];
    for a in v_ang.iter_mut() {
        *a -= slack_shift;
    }
    v_mag[slack] = case.bus_v_set(slack);
    for &i in &pv {
        v_mag[i] = case.bus_v_set(i);
    }

    let mismatch = |v_mag: &[f64], v_ang: &[f64]| -> (DVector<f64>, DVector<Complex64>) {
        let v = DVector::from_iterator(
            n,
            v_mag
                .iter()
                .zip(v_ang)
                .map(|(&m, &a)| Complex64::from_polar(m, a)),
        );
        let s = bus_power(&y_dense, &v);
        let mut f = DVector::zeros(pvpq.len() + pq.len());
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - injections.p[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[i].im - injections.q[i];
        }
        (f, v)
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut max_residual;
    loop {
        let (f, v) = mismatch(&v_mag, &v_ang);
        max_residual = f.amax();
        if max_residual <= options.tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }

        let (ds_dva, ds_dvm) = bus_power_jacobian(&y_dense, &v);
        let na = pvpq.len();
        let nm = pq.len();
        let mut jac = DMatrix::zeros(na + nm, na + nm);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva[(i, j)].re;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, na + c)] = ds_dvm[(i, j)].re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(na + r, c)] = ds_dva[(i, j)].im;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(na + r, na + c)] = ds_dvm[(i, j)].im;
            }
        }

        let lu = jac.lu();
        let dx = lu
            .solve(&(-&f))
            .ok_or(Error::SingularJacobian { iteration: iterations })?;
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularJacobian { iteration: iterations });
        }
        for (c, &i) in pvpq.iter().enumerate() {
            v_ang[i] += dx[c];
        }
        for (c, &i) in pq.iter().enumerate() {
            v_mag[i] += dx[na + c];
        }
        iterations += 1;
    }

    let v = DVector::from_iterator(
        n,
        v_mag
            .iter()
            .zip(&v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a)),
    );
    let s = bus_power(&y_dense, &v);
    Ok(PowerFlowState {
        v_mag,
        v_ang,
        p_inj: s.iter().map(|c| c.re).collect(),
        q_inj: s.iter().map(|c| c.im).collect(),
        converged,
        iterations,
        max_residual,
    })
}

/// Per-branch currents and power flows at a solved operating point.
#[derive(Debug, Clone)]
pub struct BranchFlow {
    pub branch: usize,
    pub i_from_mag: f64,
    pub i_to_mag: f64,
    pub p_from: f64,
    pub q_from: f64,
    pub p_to: f64,
    pub q_to: f64,
}

/// Compute line currents and terminal power flows for every branch.
/// Current magnitude at the from end is |y_s (V_f/tap - V_t) + y_sh V_f/tap|.
/// Out-of-service branches report zeros.
pub fn branch_flows(case: &NetworkCase, state: &PowerFlowState) -> Vec<BranchFlow> {
    let v = state.complex_voltages();
    case.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            if !br.in_service {
                return BranchFlow {
                    branch: k,
                    i_from_mag: 0.0,
                    i_to_mag: 0.0,
                    p_from: 0.0,
                    q_from: 0.0,
                    p_to: 0.0,
                    q_to: 0.0,
                };
            }
            let ys = Complex64::new(br.r, br.x).inv();
            let ysh = Complex64::new(0.0, br.b_charging / 2.0);
            let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
            let vf = v[br.from_bus];
            let vt = v[br.to_bus];
            let vf_sec = vf / tap;

            let i_from = ys * (vf_sec - vt) + ysh * vf_sec;
            let i_to = ys * (vt - vf_sec) + ysh * vt;

            // terminal powers from the bus-side branch admittances
            let y_ff = (ys + ysh) / (tap * tap.conj());
            let y_ft = -ys / tap.conj();
            let y_tf = -ys / tap;
            let y_tt = ys + ysh;
            let s_from = vf * (y_ff * vf + y_ft * vt).conj();
            let s_to = vt * (y_tf * vf + y_tt * vt).conj();

            BranchFlow {
                branch: k,
                i_from_mag: i_from.norm(),
                i_to_mag: i_to.norm(),
                p_from: s_from.re,
                q_from: s_from.im,
                p_to: s_to.re,
                q_to: s_to.im,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DcSolution {
    /// Bus angles, radians; zero at the slack.
    pub theta: Vec<f64>,
    /// Active flow per branch at the from end, per-unit; zero when out of
    /// service.
    pub flows: Vec<f64>,
}

/// DC power flow: B' theta = P with the slack angle pinned at zero and
/// line flows (theta_f - theta_t - shift) / x.
pub fn solve_dc(case: &NetworkCase, p: &[f64]) -> Result<DcSolution> {
    let n = case.buses.len();
    let slack = case.slack();
    let mut b = DMatrix::<f64>::zeros(n, n);
    let mut rhs: Vec<f64> = p.to_vec();
    for br in case.branches.iter().filter(|br| br.in_service) {
        let w = 1.0 / br.x;
        let (f, t) = (br.from_bus, br.to_bus);
        b[(f, f)] += w;
        b[(t, t)] += w;
        b[(f, t)] -= w;
        b[(t, f)] -= w;
        // a fixed phase shift acts as an injection pair
        rhs[f] += br.phase_shift * w;
        rhs[t] -= br.phase_shift * w;
    }

    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let mut b_red = DMatrix::<f64>::zeros(n - 1, n - 1);
    let mut rhs_red = DVector::<f64>::zeros(n - 1);
    for (r, &i) in keep.iter().enumerate() {
        rhs_red[r] = rhs[i];
        for (c, &j) in keep.iter().enumerate() {
            b_red[(r, c)] = b[(i, j)];
        }
    }
    let theta_red = b_red
        .clone()
        .lu()
        .solve(&rhs_red)
        .ok_or(Error::SingularBMatrix)?;
    // an LU solve of a singular-but-consistent system can still return
    // garbage; verify the residual
    let resid = (&b_red * &theta_red - &rhs_red).amax();
    if !resid.is_finite() || resid > 1e-6 * (1.0 + rhs_red.amax()) {
        return Err(Error::SingularBMatrix);
    }

    let mut theta = vec![0.0; n];
    for (r, &i) in keep.iter().enumerate() {
        theta[i] = theta_red[r];
    }
    let flows = case
        .branches
        .iter()
        .map(|br| {
            if br.in_service {
                (theta[br.from_bus] - theta[br.to_bus] - br.phase_shift) / br.x
            } else {
                0.0
            }
        })
        .collect();
    Ok(DcSolution { theta, flows })
}
