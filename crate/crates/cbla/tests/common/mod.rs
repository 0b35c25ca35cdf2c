//! Shared helpers for the integration tests: dataset builders and a
//! brute-force vertex-enumeration oracle for small pinball/constrained
//! LP fits.

#![allow(dead_code)]

use cbla::sampling::{Dataset, QuantityId};
use nalgebra::{DMatrix, DVector};

/// Dataset over raw feature rows and one target column.
pub fn dataset(rows: &[Vec<f64>], gamma: &[f64], quantity: QuantityId) -> Dataset {
    let m = rows.len();
    let p = rows[0].len();
    let names = (0..p).map(|j| format!("pd:{}", j + 2)).collect();
    Dataset {
        feature_names: names,
        x: DMatrix::from_fn(m, p, |i, j| rows[i][j]),
        targets: vec![(quantity, gamma.to_vec())],
        discarded: 0,
        warnings: Vec::new(),
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // lexicographically next k-combination of 0..n
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn mean_pinball(eps: &[f64], k1: f64, k2: f64) -> f64 {
    eps.iter().map(|&e| (k1 * e).max(k2 * e)).sum::<f64>() / eps.len() as f64
}

/// Exact optimum of the mean pinball loss over affine coefficients, by
/// enumerating every candidate vertex: coefficient vectors interpolating
/// some (p+1)-subset of the samples exactly.
pub fn pinball_oracle(rows: &[Vec<f64>], gamma: &[f64], k1: f64, k2: f64) -> f64 {
    let m = rows.len();
    let p = rows[0].len() + 1; // intercept included
    let design = DMatrix::from_fn(m, p, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let mut best = f64::INFINITY;
    for subset in combinations(m, p) {
        let sys = DMatrix::from_fn(p, p, |r, c| design[(subset[r], c)]);
        let rhs = DVector::from_fn(p, |r, _| gamma[subset[r]]);
        let Some(a) = sys.lu().solve(&rhs) else {
            continue;
        };
        if a.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let eps: Vec<f64> = (0..m)
            .map(|i| gamma[i] - design.row(i).transpose().dot(&a))
            .collect();
        best = best.min(mean_pinball(&eps, k1, k2));
    }
    best
}

/// Exact optimum of the hard over-constrained l1 fit (all residuals
/// <= 0) by the same vertex enumeration, keeping feasible candidates.
pub fn over_cla_l1_oracle(rows: &[Vec<f64>], gamma: &[f64]) -> f64 {
    let m = rows.len();
    let p = rows[0].len() + 1;
    let design = DMatrix::from_fn(m, p, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let mut best = f64::INFINITY;
    for subset in combinations(m, p) {
        let sys = DMatrix::from_fn(p, p, |r, c| design[(subset[r], c)]);
        let rhs = DVector::from_fn(p, |r, _| gamma[subset[r]]);
        let Some(a) = sys.lu().solve(&rhs) else {
            continue;
        };
        let eps: Vec<f64> = (0..m)
            .map(|i| gamma[i] - design.row(i).transpose().dot(&a))
            .collect();
        if eps.iter().any(|&e| e > 1e-9) {
            continue;
        }
        best = best.min(eps.iter().map(|e| e.abs()).sum::<f64>() / m as f64);
    }
    best
}

/// Small deterministic pseudo-random stream for test data generation.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> TestRng {
        TestRng(seed.max(1))
    }

    pub fn next_f64(&mut self) -> f64 {
        // xorshift64*, mapped to [0, 1)
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
