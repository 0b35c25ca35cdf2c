//! Dense two-phase primal simplex for `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! Small and self-contained: full-tableau pivoting with Dantzig pricing
//! and a Bland's-rule fallback once the objective stalls, which
//! guarantees termination on degenerate problems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const MAX_ITER: usize = 200_000;
const STALL_LIMIT: usize = 64;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize, // variable columns (rhs stored separately)
    t: Vec<f64>, // rows x (cols + 1), row-major, last entry = rhs
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.cols + 1;
        let piv = self.t[row * w + col];
        let inv = 1.0 / piv;
        for j in 0..w {
            self.t[row * w + j] *= inv;
        }
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let factor = self.t[i * w + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..w {
                self.t[i * w + j] -= factor * self.t[row * w + j];
            }
        }
        self.basis[row] = col;
    }
}

/// Run primal simplex on a tableau already in canonical form for the
/// given basis. `cost` is length cols+1 with the negated objective value
/// in the last slot; `allowed` masks columns that may enter.
fn iterate(tab: &mut Tableau, cost: &mut [f64], allowed: &[bool]) -> Result<bool> {
    let w = tab.cols + 1;
    let mut stalls = 0usize;
    let mut bland = false;
    for _ in 0..MAX_ITER {
        // entering column
        let mut enter: Option<usize> = None;
        if bland {
            for j in 0..tab.cols {
                if allowed[j] && cost[j] < -COST_TOL {
                    enter = Some(j);
                    break;
                }
            }
        } else {
            let mut best = -COST_TOL;
            for j in 0..tab.cols {
                if allowed[j] && cost[j] < best {
                    best = cost[j];
                    enter = Some(j);
                }
            }
        }
        let Some(col) = enter else {
            return Ok(true); // optimal
        };

        // ratio test
        let mut row: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..tab.rows {
            let a = tab.at(i, col);
            if a > PIVOT_TOL {
                let ratio = tab.rhs(i) / a;
                let better = ratio < best_ratio - 1e-12
                    || (ratio < best_ratio + 1e-12
                        && row.map_or(true, |r| tab.basis[i] < tab.basis[r]));
                if better {
                    best_ratio = ratio;
                    row = Some(i);
                }
            }
        }
        let Some(row) = row else {
            return Ok(false); // unbounded
        };

        let leaving_rhs = tab.rhs(row);
        tab.pivot(row, col);
        // eliminate the entering column from the cost row
        let factor = cost[col];
        if factor != 0.0 {
            for j in 0..w {
                cost[j] -= factor * tab.t[row * w + j];
            }
        }

        if leaving_rhs.abs() <= 1e-12 {
            stalls += 1;
            if stalls > STALL_LIMIT {
                bland = true;
            }
        } else {
            stalls = 0;
        }
    }
    Err(Error::SolverFailure("simplex iteration limit".into()))
}

fn reduce_cost_row(tab: &Tableau, c: &[f64]) -> Vec<f64> {
    let w = tab.cols + 1;
    let mut cost = vec![0.0; w];
    cost[..tab.cols].copy_from_slice(c);
    for (i, &b) in tab.basis.iter().enumerate() {
        let factor = cost[b];
        if factor != 0.0 {
            for j in 0..w {
                cost[j] -= factor * tab.t[i * w + j];
            }
        }
    }
    cost
}

fn extract(tab: &Tableau, c: &[f64]) -> LpSolution {
    let mut x = vec![0.0; tab.cols];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < tab.cols {
            x[b] = tab.rhs(i);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpSolution { x, objective }
}

/// Solve with a caller-supplied starting basis whose basic solution is
/// feasible (skips phase 1).
pub fn solve_with_basis(
    a: &DMatrix<f64>,
    b: &[f64],
    c: &[f64],
    basis: Vec<usize>,
) -> Result<LpOutcome> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    assert_eq!(basis.len(), m);

    // canonicalize: tableau = B^-1 [A | b]
    let mut bmat = DMatrix::<f64>::zeros(m, m);
    for (j, &col) in basis.iter().enumerate() {
        bmat.set_column(j, &a.column(col));
    }
    let mut aug = DMatrix::<f64>::zeros(m, n + 1);
    aug.view_mut((0, 0), (m, n)).copy_from(a);
    for i in 0..m {
        aug[(i, n)] = b[i];
    }
    let reduced = bmat
        .lu()
        .solve(&aug)
        .ok_or_else(|| Error::SolverFailure("singular starting basis".into()))?;

    let mut t = vec![0.0; m * (n + 1)];
    for i in 0..m {
        for j in 0..=n {
            t[i * (n + 1) + j] = reduced[(i, j)];
        }
        if reduced[(i, n)] < -1e-7 {
            return Err(Error::SolverFailure(
                "starting basis is not primal feasible".into(),
            ));
        }
    }
    let mut tab = Tableau {
        rows: m,
        cols: n,
        t,
        basis,
    };
    // clamp tiny negative rhs from roundoff
    for i in 0..m {
        let idx = i * (n + 1) + n;
        if tab.t[idx] < 0.0 {
            tab.t[idx] = 0.0;
        }
    }
    let mut cost = reduce_cost_row(&tab, c);
    let allowed = vec![true; n];
    if !iterate(&mut tab, &mut cost, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }
    Ok(LpOutcome::Optimal(extract(&tab, c)))
}

/// Two-phase solve from scratch.
pub fn solve(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> Result<LpOutcome> {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);

    // phase 1 tableau: [A I | b] with b >= 0
    let total = n + m;
    let mut t = vec![0.0; m * (total + 1)];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * (total + 1) + j] = sign * a[(i, j)];
        }
        t[i * (total + 1) + n + i] = 1.0;
        t[i * (total + 1) + total] = sign * b[i];
    }
    let mut tab = Tableau {
        rows: m,
        cols: total,
        t,
        basis: (n..n + m).collect(),
    };
    let phase1_cost: Vec<f64> = (0..total).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    let mut cost = reduce_cost_row(&tab, &phase1_cost);
    let mut allowed = vec![true; total];
    if !iterate(&mut tab, &mut cost, &allowed)? {
        return Err(Error::SolverFailure("phase 1 unbounded".into()));
    }
    let infeas: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= n)
        .map(|(i, _)| tab.rhs(i))
        .sum();
    if infeas > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }

    // drive remaining artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| tab.at(i, j).abs() > PIVOT_TOL) {
                tab.pivot(i, col);
            }
            // an all-zero row is redundant; its artificial stays at zero
        }
    }

    // phase 2: artificials may not re-enter
    for j in n..total {
        allowed[j] = false;
    }
    let phase2_cost: Vec<f64> = c.iter().copied().chain(std::iter::repeat(0.0).take(m)).collect();
    let mut cost = reduce_cost_row(&tab, &phase2_cost);
    if !iterate(&mut tab, &mut cost, &allowed)? {
        return Ok(LpOutcome::Unbounded);
    }
    let mut sol = extract(&tab, &phase2_cost);
    sol.x.truncate(n);
    sol.objective = c.iter().zip(&sol.x).map(|(ci, xi)| ci * xi).sum();
    Ok(LpOutcome::Optimal(sol))
}
