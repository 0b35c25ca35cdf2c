//! Network model: MATPOWER case parsing, per-unit conversion and the
//! nodal admittance matrix.

mod parse;
mod ybus;

pub use parse::parse_case;
pub use ybus::{build_admittance, AdmittanceMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag of the canonical JSON serialization of [`NetworkCase`].
pub const CASE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Ref,
    Pv,
    Pq,
}

/// One bus row. Loads and shunts are per-unit on the system base; angles
/// are radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External (case file) bus number.
    pub id: u32,
    pub kind: BusKind,
    pub p_load: f64,
    pub q_load: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_mag_init: f64,
    pub v_ang_init: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// One branch row. Endpoints are internal (dense) bus indices; use
/// [`NetworkCase::buses`] to recover external ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    pub b_charging: f64,
    /// 1.0 when the case file leaves the ratio at 0.
    pub tap_ratio: f64,
    /// Radians.
    pub phase_shift: f64,
    /// Per-unit MVA rating; parsed but not consumed by any solver here.
    pub rate_a: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    /// Internal bus index.
    pub bus: usize,
    pub p_set: f64,
    pub q_set: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub v_set: f64,
    pub in_service: bool,
}

/// Polynomial generator cost in $/h with P in MW: c2*P^2 + c1*P + c0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval_mw(&self, p_mw: f64) -> f64 {
        self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0
    }
}

/// The parsed grid model. All electrical quantities are per-unit on
/// `base_power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    /// MVA base.
    pub base_power: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    /// One entry per generator when the case provides `mpc.gencost`.
    pub gen_costs: Vec<CostCurve>,
}

#[derive(Serialize, Deserialize)]
struct CaseEnvelope {
    schema: u32,
    case: NetworkCase,
}

impl NetworkCase {
    /// Internal index of the external bus id.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Index of the slack bus. Parsing guarantees exactly one.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Ref)
            .expect("parse_case guarantees a slack bus")
    }

    /// Voltage setpoint governing a PV or slack bus: the first in-service
    /// generator's v_set, falling back to the bus voltage column.
    pub fn bus_v_set(&self, bus: usize) -> f64 {
        self.generators
            .iter()
            .find(|g| g.bus == bus && g.in_service)
            .map(|g| g.v_set)
            .unwrap_or(self.buses[bus].v_mag_init)
    }

    /// First in-service branch matching external endpoint ids.
    pub fn branch_index(&self, from: u32, to: u32) -> Option<usize> {
        let f = self.bus_index(from)?;
        let t = self.bus_index(to)?;
        self.branches
            .iter()
            .position(|br| br.in_service && br.from_bus == f && br.to_bus == t)
    }

    /// Canonical JSON serialization (schema version 1).
    pub fn to_json(&self) -> Result<String> {
        let env = CaseEnvelope {
            schema: CASE_SCHEMA_VERSION,
            case: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&env)?)
    }

    pub fn from_json(text: &str) -> Result<NetworkCase> {
        let env: CaseEnvelope = serde_json::from_str(text)?;
        if env.schema != CASE_SCHEMA_VERSION {
            return Err(Error::MalformedCase(format!(
                "unsupported schema version {}",
                env.schema
            )));
        }
        Ok(env.case)
    }
}

/// Case files bundled with the crate.
pub mod builtin {
    pub const CASE6WW: &str = include_str!("../../cases/case6ww.m");
    pub const CASE14: &str = include_str!("../../cases/case14.m");
    pub const CASE24_IEEE_RTS: &str = include_str!("../../cases/case24_ieee_rts.m");

    /// Look up a bundled case by name.
    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "case6ww" => Some(CASE6WW),
            "case14" => Some(CASE14),
            "case24_ieee_rts" | "case24" => Some(CASE24_IEEE_RTS),
            _ => None,
        }
    }
}
