//! Maximum-entropy joints under subset-marginal constraints.
//!
//! The maximizer is the I-projection of the uniform distribution onto the
//! constraint polytope. It is computed in two steps:
//!
//! 1. A sequence of LPs finds the maximal support of the polytope, i.e. the
//!    cells that some consistent joint can charge. Every other cell is zero
//!    in every feasible joint, hence in the maximizer.
//! 2. Iterative proportional fitting runs from the uniform distribution on
//!    that support, sweeping the constraints in order.
//!
//! Without step 1, IPF only approaches boundary solutions at a sublinear rate
//! (the Theorem-2 style systems, whose polytope can be a single point, are the
//! typical case). Feasibility itself is decided only by the LP.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lp::{self, InfeasibilityCertificate, LinearProgram, LpOutcome};
use crate::pmf::{self, check_consistency, entropy_of, projection_map, ConstraintSystem, JointPmf};

/// Cells whose LP mass exceeds this are counted as part of the support.
const SUPPORT_TOLERANCE: f64 = 1e-11;
/// Row residual accepted for LP witnesses.
pub const WITNESS_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MaxentOptions {
    pub max_iterations: usize,
    /// Max absolute deviation of any constrained marginal cell.
    pub residual_tolerance: f64,
    /// Stop once the entropy changes by less than this per sweep (bits).
    pub entropy_tolerance: f64,
}

impl Default for MaxentOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            residual_tolerance: 1e-10,
            entropy_tolerance: 1e-9,
        }
    }
}

impl MaxentOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return invalid("max_iterations must be at least 1");
        }
        if !(self.residual_tolerance > 0.0 && self.entropy_tolerance > 0.0) {
            return invalid("tolerances must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxentStatus {
    Converged,
    IterationLimit,
    InfeasibleDetected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxentResult {
    pub distribution: JointPmf,
    pub entropy_bits: f64,
    pub iterations: usize,
    pub residual: f64,
    pub status: MaxentStatus,
    /// Max constraint deviation after each full sweep.
    pub residual_history: Vec<f64>,
}

impl MaxentResult {
    pub fn is_converged(&self) -> bool {
        self.status == MaxentStatus::Converged
    }
}

/// One equality row of the constraint polytope: either a cell of a
/// constraint's target or the total-mass row (`constraint == None`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PolytopeRow {
    pub constraint: Option<usize>,
    pub cell: usize,
}

/// Equality rows `A x = b` of the constraint polytope restricted to `columns`
/// (cells of the full alphabet). Nonnegativity is implicit.
pub(crate) struct Polytope {
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub labels: Vec<PolytopeRow>,
}

pub(crate) fn polytope(cs: &ConstraintSystem, columns: &[usize]) -> Polytope {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut labels = Vec::new();
    for (j, c) in cs.constraints().iter().enumerate() {
        let map = projection_map(cs.alphabet(), c.subset());
        let target = c.target().probs();
        let base = rows.len();
        for (a, &t) in target.iter().enumerate() {
            rows.push(vec![0.0; columns.len()]);
            rhs.push(t);
            labels.push(PolytopeRow {
                constraint: Some(j),
                cell: a,
            });
        }
        for (k, &cell) in columns.iter().enumerate() {
            rows[base + map[cell]][k] = 1.0;
        }
    }
    rows.push(vec![1.0; columns.len()]);
    rhs.push(1.0);
    labels.push(PolytopeRow {
        constraint: None,
        cell: 0,
    });
    Polytope { rows, rhs, labels }
}

/// Cells none of whose constraint projections has zero target mass.
fn candidate_cells(cs: &ConstraintSystem) -> Vec<usize> {
    let mut alive = vec![true; cs.alphabet().cells()];
    for c in cs.constraints() {
        let map = projection_map(cs.alphabet(), c.subset());
        let target = c.target().probs();
        for (cell, flag) in alive.iter_mut().enumerate() {
            if target[map[cell]] <= 0.0 {
                *flag = false;
            }
        }
    }
    alive
        .iter()
        .enumerate()
        .filter_map(|(c, &a)| a.then_some(c))
        .collect()
}

/// Cells that at least one joint in the polytope charges, or `None` when the
/// polytope is empty.
pub fn maximal_support(cs: &ConstraintSystem) -> Result<Option<Vec<usize>>> {
    let columns = candidate_cells(cs);
    if columns.is_empty() {
        return Ok(None);
    }
    if cs.constraints().len() <= 1 {
        // a single target (or none) can spread mass over every candidate
        return Ok(Some(columns));
    }
    let poly = polytope(cs, &columns);
    let mut known = vec![false; columns.len()];
    loop {
        let cost = known.iter().map(|&k| if k { 0.0 } else { -1.0 }).collect();
        let lp = LinearProgram {
            rows: poly.rows.clone(),
            rhs: poly.rhs.clone(),
            cost,
        };
        let x = match lp::solve(&lp)? {
            LpOutcome::Optimal(s) => s.x,
            LpOutcome::Infeasible(_) => return Ok(None),
            LpOutcome::Unbounded => return Err(Error::Lp("support LP unbounded".into())),
        };
        let mut grew = false;
        for (k, &v) in x.iter().enumerate() {
            if v > SUPPORT_TOLERANCE && !known[k] {
                known[k] = true;
                grew = true;
            }
        }
        if !grew || known.iter().all(|&k| k) {
            break;
        }
    }
    Ok(Some(
        columns
            .iter()
            .zip(&known)
            .filter_map(|(&c, &k)| k.then_some(c))
            .collect(),
    ))
}

/// Maximum-entropy joint, by IPF from the uniform distribution on the
/// maximal support.
pub fn maxent(cs: &ConstraintSystem, opts: &MaxentOptions) -> Result<MaxentResult> {
    let k = cs.alphabet().cells();
    project(cs, &vec![1.0 / k as f64; k], opts)
}

/// I-projection of `init` (nonnegative weights over the full alphabet) onto
/// the constraint polytope.
pub fn project(cs: &ConstraintSystem, init: &[f64], opts: &MaxentOptions) -> Result<MaxentResult> {
    opts.validate()?;
    if init.len() != cs.alphabet().cells() || init.iter().any(|w| w.is_nan() || *w < 0.0) {
        return invalid("initial weights must be nonnegative, one per cell");
    }
    let report = check_consistency(cs);
    if !report.is_ok() {
        return Err(Error::Inconsistent(format!(
            "{} violation(s), max deviation {:e}",
            report.violations.len(),
            report.max_deviation()
        )));
    }
    let Some(support) = maximal_support(cs)? else {
        let distribution = JointPmf::uniform(cs.alphabet().clone());
        return Ok(MaxentResult {
            entropy_bits: distribution.entropy(),
            distribution,
            iterations: 0,
            residual: f64::INFINITY,
            status: MaxentStatus::InfeasibleDetected,
            residual_history: Vec::new(),
        });
    };
    let support: Vec<usize> = support.into_iter().filter(|&c| init[c] > 0.0).collect();
    if support.is_empty() {
        return invalid("initial weights vanish on the feasible support");
    }
    ipf(cs, &support, init, opts)
}

struct FittedConstraint {
    /// Sub-cell index of each support cell.
    map: Vec<usize>,
    target: Vec<f64>,
}

fn ipf(
    cs: &ConstraintSystem,
    support: &[usize],
    init: &[f64],
    opts: &MaxentOptions,
) -> Result<MaxentResult> {
    let fitted: Vec<FittedConstraint> = cs
        .constraints()
        .iter()
        .map(|c| {
            let full = projection_map(cs.alphabet(), c.subset());
            FittedConstraint {
                map: support.iter().map(|&cell| full[cell]).collect(),
                target: c.target().probs().to_vec(),
            }
        })
        .collect();
    let total: f64 = support.iter().map(|&c| init[c]).sum();
    let mut p: Vec<f64> = support.iter().map(|&c| init[c] / total).collect();
    let mut scratch = Vec::new();

    let marginal = |p: &[f64], f: &FittedConstraint, out: &mut Vec<f64>| {
        out.clear();
        out.resize(f.target.len(), 0.0);
        for (&m, &v) in f.map.iter().zip(p) {
            out[m] += v;
        }
    };
    let residual_of = |p: &[f64], scratch: &mut Vec<f64>| {
        fitted.iter().fold(0.0f64, |acc, f| {
            marginal(p, f, scratch);
            acc.max(pmf::max_abs_diff(scratch, &f.target))
        })
    };

    let mut residual = residual_of(&p, &mut scratch);
    let mut entropy = entropy_of(&p);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut status = if residual <= opts.residual_tolerance {
        MaxentStatus::Converged
    } else {
        MaxentStatus::IterationLimit
    };

    while status != MaxentStatus::Converged && iterations < opts.max_iterations {
        for f in &fitted {
            marginal(&p, f, &mut scratch);
            for (v, &m) in p.iter_mut().zip(&f.map) {
                let current = scratch[m];
                if current > 0.0 {
                    *v *= f.target[m] / current;
                }
            }
        }
        iterations += 1;
        residual = residual_of(&p, &mut scratch);
        history.push(residual);
        let next_entropy = entropy_of(&p);
        let delta = (next_entropy - entropy).abs();
        entropy = next_entropy;
        if residual <= opts.residual_tolerance && delta <= opts.entropy_tolerance {
            status = MaxentStatus::Converged;
        }
    }

    let mut probs = vec![0.0; cs.alphabet().cells()];
    for (&c, &v) in support.iter().zip(&p) {
        probs[c] = v;
    }
    let distribution = JointPmf::new(cs.alphabet().clone(), probs)?;
    Ok(MaxentResult {
        entropy_bits: distribution.entropy(),
        distribution,
        iterations,
        residual,
        status,
        residual_history: history,
    })
}

/// Maximizes `H(U_J, X)` over joints of `U_J ∪ X` matching the constraints
/// restricted to those variables, and reports `H(U_J | X)` of the maximizer.
///
/// Some constraint must contain every index of `x_indices`, which pins the
/// X-joint and makes the two objectives equivalent.
pub fn conditional_maxent(
    cs_joint: &ConstraintSystem,
    u_indices: &[usize],
    x_indices: &[usize],
    opts: &MaxentOptions,
) -> Result<MaxentResult> {
    if u_indices.is_empty() || x_indices.is_empty() {
        return invalid("conditional_maxent needs nonempty U and X index lists");
    }
    if u_indices.iter().any(|u| x_indices.contains(u)) {
        return invalid("U and X index lists overlap");
    }
    let mut vars: Vec<usize> = u_indices.iter().chain(x_indices).copied().collect();
    vars.sort_unstable();
    if vars.windows(2).any(|w| w[0] == w[1]) {
        return invalid("duplicate index in U or X list");
    }
    let restricted = cs_joint.restrict(&vars)?;
    let x_local: Vec<usize> = x_indices
        .iter()
        .map(|x| vars.binary_search(x).expect("x in vars"))
        .collect();
    let pinned = restricted
        .constraints()
        .iter()
        .any(|c| x_local.iter().all(|x| c.subset().contains(x)));
    if !pinned {
        return invalid(format!(
            "no constraint pins the joint of the conditioning variables {x_indices:?}"
        ));
    }
    let mut result = maxent(&restricted, opts)?;
    let mut x_sorted = x_local;
    x_sorted.sort_unstable();
    let h_x = result.distribution.marginalize(&x_sorted)?.entropy();
    result.entropy_bits -= h_x;
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "UPPERCASE")]
pub enum Feasibility {
    Feasible {
        witness: JointPmf,
        /// Max absolute row residual of the witness.
        residual: f64,
    },
    Infeasible {
        certificate: InfeasibilityCertificate,
        /// Meaning of each Farkas multiplier.
        rows: Vec<PolytopeRow>,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }
}

/// Phase-one simplex over the joint cells: one equality per constrained
/// marginal cell plus total mass.
pub fn feasibility(cs: &ConstraintSystem) -> Result<Feasibility> {
    let columns: Vec<usize> = (0..cs.alphabet().cells()).collect();
    let poly = polytope(cs, &columns);
    let lp = LinearProgram {
        rows: poly.rows.clone(),
        rhs: poly.rhs.clone(),
        cost: vec![0.0; columns.len()],
    };
    match lp::solve(&lp)? {
        LpOutcome::Optimal(s) => {
            let witness = JointPmf::new(cs.alphabet().clone(), s.x)?;
            let residual = row_residual(&poly, witness.probs());
            if residual > WITNESS_TOLERANCE {
                return Err(Error::Lp(format!("witness residual {residual:e} above tolerance")));
            }
            Ok(Feasibility::Feasible { witness, residual })
        }
        LpOutcome::Infeasible(certificate) => Ok(Feasibility::Infeasible {
            certificate,
            rows: poly.labels,
        }),
        LpOutcome::Unbounded => Err(Error::Lp("feasibility LP reported unbounded".into())),
    }
}

fn row_residual(poly: &Polytope, x: &[f64]) -> f64 {
    poly.rows
        .iter()
        .zip(&poly.rhs)
        .map(|(row, b)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
        .fold(0.0, f64::max)
}
