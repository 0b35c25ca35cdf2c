//! Nodal admittance matrix construction.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

use super::NetworkCase;

/// Sparse complex nodal admittance matrix Y = G + jB.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    dimension: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl AdmittanceMatrix {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries
            .get(&(i, j))
            .copied()
            .unwrap_or(Complex64::ZERO)
    }

    /// Stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    /// Column indices of the stored pattern of row `i` (neighbors of bus
    /// `i` including `i` itself).
    pub fn row_pattern(&self, i: usize) -> Vec<usize> {
        self.entries
            .range((i, 0)..=(i, usize::MAX))
            .map(|(&(_, j), _)| j)
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dimension, self.dimension);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }
}

/// Build the admittance matrix of a case: series admittance 1/(r+jx),
/// half line charging at each end, tap ratio and phase shift on the from
/// side, bus shunts on the diagonal. Out-of-service branches are skipped.
pub fn build_admittance(case: &NetworkCase) -> Result<AdmittanceMatrix> {
    let n = case.buses.len();
    let mut entries: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    let mut add = |i: usize, j: usize, v: Complex64| {
        *entries.entry((i, j)).or_insert(Complex64::ZERO) += v;
    };

    // summation order fixed by sorted (from, to) pairs
    let mut order: Vec<usize> = (0..case.branches.len()).collect();
    order.sort_by_key(|&k| (case.branches[k].from_bus, case.branches[k].to_bus, k));

    for k in order {
        let br = &case.branches[k];
        if !br.in_service {
            continue;
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::SingularBranch {
                from: case.buses[br.from_bus].id,
                to: case.buses[br.to_bus].id,
            });
        }
        let ys = Complex64::new(br.r, br.x).inv();
        let ysh = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = Complex64::from_polar(br.tap_ratio, br.phase_shift);
        let (f, t) = (br.from_bus, br.to_bus);
        add(f, f, (ys + ysh) / (tap * tap.conj()));
        add(t, t, ys + ysh);
        add(f, t, -ys / tap.conj());
        add(t, f, -ys / tap);
    }

    for (i, bus) in case.buses.iter().enumerate() {
        add(i, i, Complex64::new(bus.g_shunt, bus.b_shunt));
    }

    // drop exact zeros so the pattern is exactly the neighbor set
    entries.retain(|_, v| *v != Complex64::ZERO);
    // keep every diagonal entry: the row pattern includes the bus itself
    for i in 0..n {
        entries.entry((i, i)).or_insert(Complex64::ZERO);
    }

    Ok(AdmittanceMatrix {
        dimension: n,
        entries,
    })
}
