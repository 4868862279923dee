//! Dense two-phase simplex for `min c·x  s.t.  A x = b, x ≥ 0`.
//!
//! Pivoting follows Bland's rule, so the method terminates on degenerate
//! problems. Problem sizes here are a few hundred columns at most, which a
//! dense tableau handles comfortably.

use serde::Serialize;

use crate::error::{Error, Result};

pub const PIVOT_TOLERANCE: f64 = 1e-10;
/// Phase-one objective above which a problem is declared infeasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

const MAX_PIVOTS: usize = 200_000;

/// Equality-form linear program. `rows[i]` has one coefficient per column.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub cost: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic column of each surviving row; redundant rows are dropped.
    pub basis: Vec<usize>,
}

/// Evidence that `A x = b, x ≥ 0` has no solution.
///
/// `farkas` satisfies `farkas·A_j ≤ 0` for every column and
/// `farkas·b = phase_one_objective > 0`, which rules out any nonnegative `x`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfeasibilityCertificate {
    pub phase_one_objective: f64,
    /// Final phase-one basis; indices `>= columns` are artificial columns.
    pub basis: Vec<usize>,
    pub farkas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible(InfeasibilityCertificate),
    Unbounded,
}

struct Tableau {
    /// `m + 1` rows of `width` entries; row 0 holds reduced costs and `-z`.
    data: Vec<f64>,
    width: usize,
    m: usize,
    basis: Vec<usize>,
    active: Vec<bool>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.at(row, col);
        let start = row * w;
        for v in &mut self.data[start..start + w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[start..start + w].to_vec();
        for r in 0..=self.m {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            let base = r * w;
            for (v, &pr) in self.data[base..base + w].iter_mut().zip(&pivot_row) {
                *v -= factor * pr;
            }
            self.data[base + col] = 0.0;
        }
        self.basis[row - 1] = col;
    }

    /// Runs Bland's rule over the columns accepted by `allowed`.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool, pivots: &mut usize) -> Result<bool> {
        loop {
            let entering = (0..self.width - 1)
                .find(|&j| allowed(j) && self.at(0, j) < -PIVOT_TOLERANCE);
            let Some(col) = entering else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 1..=self.m {
                if !self.active[r - 1] {
                    continue;
                }
                let a = self.at(r, col);
                if a <= PIVOT_TOLERANCE {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((best, best_ratio)) => {
                        if ratio < best_ratio - 1e-12
                            || (ratio <= best_ratio + 1e-12
                                && self.basis[r - 1] < self.basis[best - 1])
                        {
                            Some((r, ratio))
                        } else {
                            Some((best, best_ratio))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::Lp(format!("pivot limit {MAX_PIVOTS} exceeded")));
            }
        }
    }
}

/// Solves the program with the two-phase method.
pub fn solve(lp: &LinearProgram) -> Result<LpOutcome> {
    let m = lp.rows.len();
    let n = lp.cost.len();
    if lp.rhs.len() != m || lp.rows.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("row, rhs and cost dimensions disagree".into()));
    }
    let width = n + m + 1;
    let mut data = vec![0.0; (m + 1) * width];
    let mut sign = vec![1.0; m];
    for i in 0..m {
        if lp.rhs[i] < 0.0 {
            sign[i] = -1.0;
        }
        let base = (i + 1) * width;
        for j in 0..n {
            data[base + j] = sign[i] * lp.rows[i][j];
        }
        data[base + n + i] = 1.0;
        data[base + width - 1] = sign[i] * lp.rhs[i];
    }
    // phase-one reduced costs: d_j = -sum_i a_ij, artificials 0, entry -w
    for i in 0..m {
        let base = (i + 1) * width;
        for j in 0..n {
            data[j] -= data[base + j];
        }
        data[width - 1] -= data[base + width - 1];
    }
    let mut t = Tableau {
        data,
        width,
        m,
        basis: (n..n + m).collect(),
        active: vec![true; m],
    };
    let mut pivots = 0;
    t.optimize(|j| j < n, &mut pivots)?;

    let phase_one = -t.rhs(0);
    if phase_one > FEASIBILITY_TOLERANCE {
        let farkas = (0..m).map(|i| (1.0 - t.at(0, n + i)) * sign[i]).collect();
        return Ok(LpOutcome::Infeasible(InfeasibilityCertificate {
            phase_one_objective: phase_one,
            basis: t.basis.clone(),
            farkas,
        }));
    }

    // drive artificials out of the basis, dropping redundant rows
    for r in 1..=m {
        if t.basis[r - 1] < n {
            continue;
        }
        let col = (0..n)
            .filter(|&j| t.at(r, j).abs() > PIVOT_TOLERANCE)
            .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
        match col {
            Some(j) => t.pivot(r, j),
            None => t.active[r - 1] = false,
        }
    }

    // phase-two reduced costs from the current basis
    for j in 0..width {
        t.data[j] = if j < n { lp.cost[j] } else { 0.0 };
    }
    for r in 1..=m {
        if !t.active[r - 1] {
            continue;
        }
        let b = t.basis[r - 1];
        let cb = lp.cost[b];
        if cb == 0.0 {
            continue;
        }
        for j in 0..width {
            let v = t.at(r, j);
            t.data[j] -= cb * v;
        }
    }
    if !t.optimize(|j| j < n, &mut pivots)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    let mut basis = Vec::with_capacity(m);
    for r in 1..=m {
        if !t.active[r - 1] {
            continue;
        }
        let b = t.basis[r - 1];
        basis.push(b);
        if b < n {
            x[b] = t.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.cost).map(|(a, c)| a * c).sum();
    Ok(LpOutcome::Optimal(LpSolution { x, objective, basis }))
}
