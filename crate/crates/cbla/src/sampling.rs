//! Uniform sampling of the operating range and regression dataset
//! assembly.
//!
//! Draws use ChaCha8 seeded from [`RangeSpec::seed`]; every varied
//! coordinate consumes one `f64` from the stream per draw, in feature
//! order, so runs are reproducible across platforms.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netio::{AdmittanceMatrix, BusKind, NetworkCase};
use crate::powerflow::{branch_flows, nominal_injections, solve_ac, PfOptions};

/// Which nominal injections the sampling box scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarySet {
    /// Active and reactive demand at every load bus, independently per bus.
    Loads,
    /// Active setpoints of in-service non-slack generators.
    Generators,
    LoadsAndGenerators,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    /// Multipliers on the nominal injections, e.g. 0.7 and 1.3.
    pub lower_frac: f64,
    pub upper_frac: f64,
    pub vary_set: VarySet,
    pub seed: u64,
    pub sample_count: usize,
    /// Draw one shared scale factor per sample instead of independent
    /// per-coordinate factors (sensitivity-study mode).
    #[serde(default)]
    pub global_scale: bool,
}

impl RangeSpec {
    pub fn new(lower_frac: f64, upper_frac: f64, seed: u64, sample_count: usize) -> Self {
        RangeSpec {
            lower_frac,
            upper_frac,
            vary_set: VarySet::Loads,
            seed,
            sample_count,
            global_scale: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower_frac > 0.0 && self.lower_frac <= self.upper_frac) {
            return Err(Error::SolverFailure(format!(
                "range spec needs 0 < lower <= upper, got {}..{}",
                self.lower_frac, self.upper_frac
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::SolverFailure("sample_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// A scalar operating quantity tracked per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
pub enum QuantityId {
    /// Voltage magnitude at an external bus id.
    VBus(u32),
    /// From-end current magnitude on the branch between external ids.
    IBranchFrom(u32, u32),
    /// To-end current magnitude.
    IBranchTo(u32, u32),
    /// Active power produced by the slack generator.
    PSlack,
}

impl fmt::Display for QuantityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuantityId::VBus(b) => write!(f, "v:{b}"),
            QuantityId::IBranchFrom(a, b) => write!(f, "i:{a}-{b}"),
            QuantityId::IBranchTo(a, b) => write!(f, "it:{a}-{b}"),
            QuantityId::PSlack => write!(f, "pslack"),
        }
    }
}

impl FromStr for QuantityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownQuantity(s.to_string());
        if s == "pslack" {
            return Ok(QuantityId::PSlack);
        }
        let (prefix, rest) = s.split_once(':').ok_or_else(bad)?;
        match prefix {
            "v" => Ok(QuantityId::VBus(rest.parse().map_err(|_| bad())?)),
            "i" | "it" => {
                let (a, b) = rest.split_once('-').ok_or_else(bad)?;
                let a = a.parse().map_err(|_| bad())?;
                let b = b.parse().map_err(|_| bad())?;
                Ok(if prefix == "i" {
                    QuantityId::IBranchFrom(a, b)
                } else {
                    QuantityId::IBranchTo(a, b)
                })
            }
            _ => Err(bad()),
        }
    }
}

/// One varied injection coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Coordinate {
    LoadP { bus: usize },
    LoadQ { bus: usize },
    GenP { gen: usize },
}

/// Regression dataset: one row per converged sample, columns in the
/// recorded feature order (varied P entries by ascending bus, then varied
/// Q entries).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub targets: Vec<(QuantityId, Vec<f64>)>,
    pub discarded: usize,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn sample_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.x.ncols()
    }

    pub fn target(&self, q: &QuantityId) -> Option<&[f64]> {
        self.targets
            .iter()
            .find(|(id, _)| id == q)
            .map(|(_, v)| v.as_slice())
    }

    /// RFC 4180 CSV: feature columns then one column per quantity.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self
            .feature_names
            .iter()
            .cloned()
            .chain(self.targets.iter().map(|(q, _)| q.to_string()))
            .collect();
        out.push_str(&header.join(","));
        out.push_str("\r\n");
        for m in 0..self.sample_count() {
            let mut fields: Vec<String> =
                (0..self.feature_count()).map(|j| self.x[(m, j)].to_string()).collect();
            for (_, col) in &self.targets {
                fields.push(col[m].to_string());
            }
            out.push_str(&fields.join(","));
            out.push_str("\r\n");
        }
        out
    }

    /// Parse a dataset back from [`Dataset::to_csv`] output. Header
    /// columns that parse as quantity names become targets; everything
    /// before them is a feature.
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let bad = |msg: &str| Error::MalformedCase(format!("dataset csv: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let names: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        let first_target = names
            .iter()
            .position(|n| n.parse::<QuantityId>().is_ok())
            .unwrap_or(names.len());
        let feature_names: Vec<String> =
            names[..first_target].iter().map(|s| s.to_string()).collect();
        let quantities: Vec<QuantityId> = names[first_target..]
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if fields.len() != names.len() {
                return Err(bad("row width does not match header"));
            }
            let row = fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad("non-numeric field")))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let m = rows.len();
        let p = feature_names.len();
        let x = DMatrix::from_fn(m, p, |i, j| rows[i][j]);
        let targets = quantities
            .iter()
            .enumerate()
            .map(|(k, q)| (*q, rows.iter().map(|r| r[p + k]).collect()))
            .collect();
        Ok(Dataset {
            feature_names,
            x,
            targets,
            discarded: 0,
            warnings: Vec::new(),
        })
    }
}

fn varied_coordinates(case: &NetworkCase, vary: VarySet) -> (Vec<Coordinate>, Vec<String>) {
    let slack = case.slack();
    let mut p_coords: Vec<(u32, Coordinate, String)> = Vec::new();
    let mut q_coords: Vec<(u32, Coordinate, String)> = Vec::new();

    if matches!(vary, VarySet::Loads | VarySet::LoadsAndGenerators) {
        for (i, bus) in case.buses.iter().enumerate() {
            if bus.p_load != 0.0 {
                p_coords.push((bus.id, Coordinate::LoadP { bus: i }, format!("pd:{}", bus.id)));
            }
            if bus.q_load != 0.0 {
                q_coords.push((bus.id, Coordinate::LoadQ { bus: i }, format!("qd:{}", bus.id)));
            }
        }
    }
    if matches!(vary, VarySet::Generators | VarySet::LoadsAndGenerators) {
        for (g, gen) in case.generators.iter().enumerate() {
            if !gen.in_service || gen.bus == slack || gen.p_set == 0.0 {
                continue;
            }
            let id = case.buses[gen.bus].id;
            let peers = case
                .generators
                .iter()
                .enumerate()
                .filter(|(_, o)| o.in_service && o.bus == gen.bus && o.p_set != 0.0)
                .count();
            let name = if peers > 1 {
                let ord = case.generators[..g]
                    .iter()
                    .filter(|o| o.in_service && o.bus == gen.bus && o.p_set != 0.0)
                    .count();
                format!("pg:{id}u{ord}")
            } else {
                format!("pg:{id}")
            };
            p_coords.push((id, Coordinate::GenP { gen: g }, name));
        }
    }

    p_coords.sort_by(|a, b| (a.0, &a.2).cmp(&(b.0, &b.2)));
    q_coords.sort_by(|a, b| (a.0, &a.2).cmp(&(b.0, &b.2)));

    let mut coords = Vec::new();
    let mut names = Vec::new();
    for (_, c, n) in p_coords.into_iter().chain(q_coords) {
        coords.push(c);
        names.push(n);
    }
    (coords, names)
}

fn nominal_value(case: &NetworkCase, c: &Coordinate) -> f64 {
    match *c {
        Coordinate::LoadP { bus } => case.buses[bus].p_load,
        Coordinate::LoadQ { bus } => case.buses[bus].q_load,
        Coordinate::GenP { gen } => case.generators[gen].p_set,
    }
}

fn apply_values(case: &mut NetworkCase, coords: &[Coordinate], values: &[f64]) {
    for (c, &v) in coords.iter().zip(values) {
        match *c {
            Coordinate::LoadP { bus } => case.buses[bus].p_load = v,
            Coordinate::LoadQ { bus } => case.buses[bus].q_load = v,
            Coordinate::GenP { gen } => case.generators[gen].p_set = v,
        }
    }
}

fn extract_target(
    case: &NetworkCase,
    q: &QuantityId,
    state: &crate::powerflow::PowerFlowState,
    flows: &[crate::powerflow::BranchFlow],
) -> Result<f64> {
    let missing = || Error::UnknownQuantity(q.to_string());
    match q {
        QuantityId::VBus(b) => {
            let i = case.bus_index(*b).ok_or_else(missing)?;
            Ok(state.v_mag[i])
        }
        QuantityId::IBranchFrom(a, b) => {
            let k = case.branch_index(*a, *b).ok_or_else(missing)?;
            Ok(flows[k].i_from_mag)
        }
        QuantityId::IBranchTo(a, b) => {
            let k = case.branch_index(*a, *b).ok_or_else(missing)?;
            Ok(flows[k].i_to_mag)
        }
        QuantityId::PSlack => Ok(state.slack_generation(case)),
    }
}

/// Draw `spec.sample_count` converged operating samples and record the
/// requested quantities. Non-converged draws are discarded and redrawn;
/// more than `10 * sample_count` consecutive discards aborts.
pub fn draw_samples(
    case: &NetworkCase,
    y: &AdmittanceMatrix,
    spec: &RangeSpec,
    quantities: &[QuantityId],
) -> Result<Dataset> {
    spec.validate()?;
    let (coords, feature_names) = varied_coordinates(case, spec.vary_set);
    let nominal: Vec<f64> = coords.iter().map(|c| nominal_value(case, c)).collect();
    let opts = PfOptions::default();

    let mut warnings = Vec::new();
    for (label, frac) in [("lower", spec.lower_frac), ("upper", spec.upper_frac)] {
        let mut corner = case.clone();
        let values: Vec<f64> = nominal.iter().map(|v| v * frac).collect();
        apply_values(&mut corner, &coords, &values);
        let inj = nominal_injections(&corner);
        match solve_ac(&corner, y, &inj, &opts) {
            Ok(st) if st.converged => {}
            _ => warnings.push(format!(
                "{label} box corner (x{frac}) did not converge; expect discarded draws"
            )),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.sample_count;
    let mut x = DMatrix::zeros(m, coords.len());
    let mut targets: Vec<(QuantityId, Vec<f64>)> = quantities
        .iter()
        .map(|q| (*q, Vec::with_capacity(m)))
        .collect();

    let mut discarded = 0usize;
    let mut consecutive = 0usize;
    let mut row = 0usize;
    while row < m {
        let values: Vec<f64> = if spec.global_scale {
            let f = rng.gen_range(spec.lower_frac..=spec.upper_frac);
            nominal.iter().map(|v| v * f).collect()
        } else {
            nominal
                .iter()
                .map(|v| v * rng.gen_range(spec.lower_frac..=spec.upper_frac))
                .collect()
        };
        let mut sampled = case.clone();
        apply_values(&mut sampled, &coords, &values);
        let inj = nominal_injections(&sampled);
        let state = solve_ac(&sampled, y, &inj, &opts)?;
        if !state.converged {
            discarded += 1;
            consecutive += 1;
            if consecutive > 10 * m {
                return Err(Error::RangeInfeasible { discards: consecutive });
            }
            continue;
        }
        consecutive = 0;
        let flows = branch_flows(&sampled, &state);
        for (j, &v) in values.iter().enumerate() {
            x[(row, j)] = v;
        }
        for (q, col) in targets.iter_mut() {
            col.push(extract_target(&sampled, q, &state, &flows)?);
        }
        row += 1;
    }

    Ok(Dataset {
        feature_names,
        x,
        targets,
        discarded,
        warnings,
    })
}

/// Expand shorthand quantity lists like `v:all,i:3-24` against a case.
pub fn expand_quantities(case: &NetworkCase, text: &str) -> Result<Vec<QuantityId>> {
    let mut out = Vec::new();
    for part in text.split(',').filter(|p| !p.is_empty()) {
        if part == "v:all" {
            // every load (PQ) bus
            for bus in &case.buses {
                if bus.kind == BusKind::Pq {
                    out.push(QuantityId::VBus(bus.id));
                }
            }
        } else {
            out.push(part.parse()?);
        }
    }
    Ok(out)
}
