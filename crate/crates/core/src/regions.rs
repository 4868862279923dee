//! Rate regions as systems of subset-sum lower bounds.
//!
//! Every region here is a list of inequalities `Σ_{i∈J} R_i ≥ c_J`, one per
//! nonempty subset `J`, stored in bitmask order (bit `i` set iff `i ∈ J`).
//!
//! - [`build_ra_fixed`]: bounds of the covering region for one consistent joint.
//! - [`build_rstar`]: bounds that use the subset-local maximum entropy.
//! - [`point_in_ra_union`]: membership in the union of fixed-joint regions over
//!   all consistent joints, by Frank-Wolfe on a smoothed min.
//! - [`zero_rate_certificate`]: LP proof that no consistent joint makes a set of
//!   variables independent, which rules out zero rates on that set.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lp::{self, LinearProgram, LpOutcome};
use crate::maxent::{self, Feasibility, MaxentOptions, MaxentStatus};
use crate::pmf::{
    check_consistency, projection_map, validate_subset, ConstraintSystem, JointPmf,
    SubsetConstraint,
};
use crate::rng::keyed_rng;

/// Largest number of variables for which all `2^N - 1` subsets are built.
pub const MAX_REGION_VARS: usize = 8;
/// `inside` requires a margin of at least `-INSIDE_TOLERANCE`.
pub const INSIDE_TOLERANCE: f64 = 1e-7;
/// `outside` for the union requires a certified margin of at most `-OUTSIDE_MARGIN`.
pub const OUTSIDE_MARGIN: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatePoint {
    rates: Vec<f64>,
}

impl RatePoint {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return invalid(format!("rates must be finite and nonnegative, got {r}"));
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    fn subset_sum(&self, subset: &[usize]) -> f64 {
        subset.iter().map(|&i| self.rates[i]).sum()
    }
}

/// `Σ_{i∈subset} R_i ≥ bound` (bits per symbol).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Inequality {
    pub subset: Vec<usize>,
    pub bound: f64,
}

impl Inequality {
    pub fn mask(&self) -> u64 {
        self.subset.iter().fold(0, |m, &i| m | 1 << i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalitySystem {
    num_vars: usize,
    entries: Vec<Inequality>,
}

impl InequalitySystem {
    pub fn new(num_vars: usize, entries: Vec<Inequality>) -> Result<Self> {
        let mut masks = Vec::with_capacity(entries.len());
        for e in &entries {
            validate_subset(&e.subset, num_vars)?;
            masks.push(e.mask());
        }
        masks.sort_unstable();
        if masks.windows(2).any(|w| w[0] == w[1]) {
            return invalid("inequality subsets must be distinct");
        }
        Ok(Self { num_vars, entries })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn entries(&self) -> &[Inequality] {
        &self.entries
    }

    pub fn bound(&self, subset: &[usize]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.subset == subset)
            .map(|e| e.bound)
    }

    /// `subset_mask,bound_bits` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subset_mask,bound_bits\n");
        for e in &self.entries {
            out.push_str(&format!("{},{:.12}\n", e.mask(), e.bound));
        }
        out
    }
}

/// Every nonempty subset of `0..n`, in bitmask order.
pub fn nonempty_subsets(n: usize) -> Vec<Vec<usize>> {
    (1u64..1 << n)
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MembershipStatus {
    Inside,
    Outside,
    BoundaryIndeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipVerdict {
    pub status: MembershipStatus,
    /// Smallest slack over all inequalities (best found, for the union).
    pub margin: f64,
    /// Certified upper bound on the achievable margin (union queries only).
    pub margin_upper_bound: Option<f64>,
    pub witness: Option<JointPmf>,
}

fn ensure_consistent(cs: &ConstraintSystem) -> Result<()> {
    let report = check_consistency(cs);
    if report.is_ok() {
        Ok(())
    } else {
        Err(Error::Inconsistent(format!(
            "{} violation(s), max deviation {:e}",
            report.violations.len(),
            report.max_deviation()
        )))
    }
}

/// `H*({X}_J)` for every nonempty `J`: maximum entropy over `J` under the
/// constraints `S_j ∩ J` and the marginals of `J`.
pub fn max_entropy_table(
    cs: &ConstraintSystem,
    opts: &MaxentOptions,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = cs.num_vars();
    if n > MAX_REGION_VARS {
        return invalid(format!("regions support at most {MAX_REGION_VARS} variables, got {n}"));
    }
    ensure_consistent(cs)?;
    nonempty_subsets(n)
        .into_par_iter()
        .map(|subset| {
            let local = cs.restrict(&subset)?.with_marginal_constraints();
            let r = maxent::maxent(&local, opts)?;
            match r.status {
                MaxentStatus::Converged => Ok((subset, r.entropy_bits)),
                MaxentStatus::InfeasibleDetected => Err(Error::Infeasible { subset }),
                MaxentStatus::IterationLimit => Err(Error::NotConverged {
                    subset,
                    residual: r.residual,
                }),
            }
        })
        .collect()
}

/// The improved region: `c_J = Σ_{i∈J} H(X_i) - H*({X}_J)`.
pub fn build_rstar(cs: &ConstraintSystem, opts: &MaxentOptions) -> Result<InequalitySystem> {
    let h = cs.marginal_entropies();
    let entries = max_entropy_table(cs, opts)?
        .into_iter()
        .map(|(subset, h_star)| {
            let bound = subset.iter().map(|&i| h[i]).sum::<f64>() - h_star;
            Inequality { subset, bound }
        })
        .collect();
    InequalitySystem::new(cs.num_vars(), entries)
}

/// The covering region of one joint: `c_J = Σ_{i∈J} H(X_i) - H(P̃_J)`.
pub fn build_ra_fixed(p_tilde: &JointPmf) -> InequalitySystem {
    let n = p_tilde.num_vars();
    let h: Vec<f64> = (0..n)
        .map(|i| p_tilde.marginalize(&[i]).expect("valid index").entropy())
        .collect();
    let entries = nonempty_subsets(n)
        .into_iter()
        .map(|subset| {
            let joint = p_tilde.marginalize(&subset).expect("valid subset").entropy();
            let bound = subset.iter().map(|&i| h[i]).sum::<f64>() - joint;
            Inequality { subset, bound }
        })
        .collect();
    InequalitySystem::new(n, entries).expect("subsets are distinct")
}

pub fn point_in_system(r: &RatePoint, sys: &InequalitySystem) -> Result<MembershipVerdict> {
    if r.len() != sys.num_vars() {
        return invalid(format!(
            "rate point has {} coordinates, region has {}",
            r.len(),
            sys.num_vars()
        ));
    }
    let margin = sys
        .entries()
        .iter()
        .map(|e| r.subset_sum(&e.subset) - e.bound)
        .fold(f64::INFINITY, f64::min);
    let status = if margin >= -INSIDE_TOLERANCE {
        MembershipStatus::Inside
    } else {
        MembershipStatus::Outside
    };
    Ok(MembershipVerdict {
        status,
        margin,
        margin_upper_bound: None,
        witness: None,
    })
}

/// Frank-Wolfe schedule for [`point_in_ra_union`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnionOptions {
    /// Soft-min temperatures in bits, applied in order.
    pub temperatures: Vec<f64>,
    pub iterations_per_stage: usize,
    pub maxent: MaxentOptions,
}

impl Default for UnionOptions {
    fn default() -> Self {
        Self {
            temperatures: vec![1.0, 0.3, 0.1, 0.01, 1e-3],
            iterations_per_stage: 200,
            maxent: MaxentOptions::default(),
        }
    }
}

/// Membership verdict plus the per-stage objective trace of the solver.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnionSearch {
    pub verdict: MembershipVerdict,
    /// Smoothed objective after each iteration, one list per temperature.
    pub stage_objectives: Vec<Vec<f64>>,
}

/// The concave functions `g_J(P̃) = Σ_{i∈J} (r_i - H(X_i)) + H(P̃_J)` over the
/// support cells of the polytope.
struct Slacks {
    offsets: Vec<f64>,
    /// Per subset: sub-cell of each support cell, and the sub-alphabet size.
    maps: Vec<(Vec<usize>, usize)>,
}

impl Slacks {
    fn values(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut marginals = Vec::with_capacity(self.maps.len());
        let mut values = Vec::with_capacity(self.maps.len());
        for ((map, size), &offset) in self.maps.iter().zip(&self.offsets) {
            let mut m = vec![0.0; *size];
            for (&a, &v) in map.iter().zip(x) {
                m[a] += v;
            }
            values.push(offset + crate::pmf::entropy_of(&m));
            marginals.push(m);
        }
        (values, marginals)
    }

    fn hard_min(&self, x: &[f64]) -> f64 {
        self.values(x).0.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// `-τ ln Σ exp(-g/τ)` and the softmax weights.
fn soft_min(values: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = values.iter().map(|v| (-(v - m) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    (m - tau * z.ln(), e.into_iter().map(|w| w / z).collect())
}

fn smoothed(slacks: &Slacks, x: &[f64], tau: f64) -> f64 {
    soft_min(&slacks.values(x).0, tau).0
}

/// Gradient of the smoothed objective, up to an additive constant per cell
/// (constants vanish on the unit-mass polytope).
fn gradient(slacks: &Slacks, x: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let (values, marginals) = slacks.values(x);
    let (f, weights) = soft_min(&values, tau);
    let mut grad = vec![0.0; x.len()];
    for (((map, _), m), w) in slacks.maps.iter().zip(&marginals).zip(&weights) {
        if *w == 0.0 {
            continue;
        }
        for (g, &a) in grad.iter_mut().zip(map) {
            *g -= w * m[a].max(f64::MIN_POSITIVE).log2();
        }
    }
    (f, grad)
}

fn linear_oracle(poly: &maxent::Polytope, grad: &[f64]) -> Result<Vec<f64>> {
    let lp = LinearProgram {
        rows: poly.rows.clone(),
        rhs: poly.rhs.clone(),
        cost: grad.iter().map(|g| -g).collect(),
    };
    match lp::solve(&lp)? {
        LpOutcome::Optimal(s) => Ok(s.x),
        LpOutcome::Infeasible(_) => Err(Error::Lp("linear oracle found an empty polytope".into())),
        LpOutcome::Unbounded => Err(Error::Lp("linear oracle unbounded".into())),
    }
}

/// Tests `r` against the union over consistent joints `P̃` of the fixed-joint
/// regions, by maximizing `min_J g_J(P̃)` over the constraint polytope.
pub fn point_in_ra_union(
    r: &RatePoint,
    cs: &ConstraintSystem,
    opts: &UnionOptions,
) -> Result<MembershipVerdict> {
    Ok(ra_union_search(r, cs, opts)?.verdict)
}

pub fn ra_union_search(
    r: &RatePoint,
    cs: &ConstraintSystem,
    opts: &UnionOptions,
) -> Result<UnionSearch> {
    let n = cs.num_vars();
    if r.len() != n {
        return invalid(format!("rate point has {} coordinates, system has {n}", r.len()));
    }
    if n > MAX_REGION_VARS {
        return invalid(format!("regions support at most {MAX_REGION_VARS} variables"));
    }
    if opts.temperatures.is_empty() || opts.temperatures.iter().any(|t| t.is_nan() || *t <= 0.0) {
        return invalid("temperatures must be positive and nonempty");
    }
    ensure_consistent(cs)?;
    let sys = cs.with_marginal_constraints();
    let start = maxent::maxent(&sys, &opts.maxent)?;
    match start.status {
        MaxentStatus::InfeasibleDetected => {
            // no consistent joint, so the union is empty
            return Ok(UnionSearch {
                verdict: MembershipVerdict {
                    status: MembershipStatus::Outside,
                    margin: f64::NEG_INFINITY,
                    margin_upper_bound: Some(f64::NEG_INFINITY),
                    witness: None,
                },
                stage_objectives: Vec::new(),
            });
        }
        MaxentStatus::IterationLimit => {
            return Err(Error::NotConverged {
                subset: (0..n).collect(),
                residual: start.residual,
            })
        }
        MaxentStatus::Converged => {}
    }
    let full = start.distribution.probs();
    let support: Vec<usize> = (0..full.len()).filter(|&c| full[c] > 0.0).collect();
    let poly = maxent::polytope(&sys, &support);

    let h = cs.marginal_entropies();
    let subsets = nonempty_subsets(n);
    let slacks = Slacks {
        offsets: subsets
            .iter()
            .map(|s| s.iter().map(|&i| r.rates()[i] - h[i]).sum())
            .collect(),
        maps: subsets
            .iter()
            .map(|s| {
                let m = projection_map(cs.alphabet(), s);
                let size = cs.alphabet().select(s).expect("valid subset").cells();
                (support.iter().map(|&c| m[c]).collect(), size)
            })
            .collect(),
    };

    let mut x: Vec<f64> = support.iter().map(|&c| full[c]).collect();
    let mut best = (slacks.hard_min(&x), x.clone());
    let mut stage_objectives = Vec::with_capacity(opts.temperatures.len());
    for &tau in &opts.temperatures {
        let mut trace = Vec::with_capacity(opts.iterations_per_stage);
        let mut f = smoothed(&slacks, &x, tau);
        for k in 0..opts.iterations_per_stage {
            let (_, grad) = gradient(&slacks, &x, tau);
            let s = linear_oracle(&poly, &grad)?;
            // step 2/(k+2) counting k from 1, so iterates stay in the relative
            // interior; halve until the objective does not drop
            let mut gamma = 2.0 / (k as f64 + 3.0);
            let mut accepted = false;
            for _ in 0..40 {
                let candidate: Vec<f64> =
                    x.iter().zip(&s).map(|(a, b)| a + gamma * (b - a)).collect();
                let fc = smoothed(&slacks, &candidate, tau);
                if fc >= f {
                    x = candidate;
                    f = fc;
                    accepted = true;
                    break;
                }
                gamma *= 0.5;
            }
            trace.push(f);
            if accepted {
                let hard = slacks.hard_min(&x);
                if hard > best.0 {
                    best = (hard, x.clone());
                }
            }
        }
        stage_objectives.push(trace);
    }

    // concavity: max_P min_J g_J ≤ max_P f_τ + τ ln(#J) ≤ f_τ(x) + <∇f_τ(x), s - x> + τ ln(#J)
    let tau = *opts.temperatures.last().expect("nonempty");
    let (f, grad) = gradient(&slacks, &x, tau);
    let s = linear_oracle(&poly, &grad)?;
    let gap: f64 = grad.iter().zip(s.iter().zip(&x)).map(|(g, (a, b))| g * (a - b)).sum();
    let upper = f + gap.max(0.0) + tau * (subsets.len() as f64).ln();

    let (margin, best_x) = best;
    let status = if margin >= -INSIDE_TOLERANCE {
        MembershipStatus::Inside
    } else if upper <= -OUTSIDE_MARGIN {
        MembershipStatus::Outside
    } else {
        MembershipStatus::BoundaryIndeterminate
    };
    let witness = if status == MembershipStatus::Inside {
        let mut probs = vec![0.0; cs.alphabet().cells()];
        for (&c, &v) in support.iter().zip(&best_x) {
            probs[c] = v;
        }
        Some(JointPmf::new(cs.alphabet().clone(), probs)?)
    } else {
        None
    };
    Ok(UnionSearch {
        verdict: MembershipVerdict {
            status,
            margin,
            margin_upper_bound: Some(upper),
            witness,
        },
        stage_objectives,
    })
}

/// LP test of whether some consistent joint makes the variables of
/// `zero_set` mutually independent with the given marginals.
///
/// Zero rates on `zero_set` force that independence for every point of the
/// union, and convex combinations of nonnegative rates cannot sum to zero
/// unless each term does, so an infeasible answer excludes such points from
/// the convex closure as well.
pub fn zero_rate_certificate(cs: &ConstraintSystem, zero_set: &[usize]) -> Result<Feasibility> {
    validate_subset(zero_set, cs.num_vars())?;
    let factors: Vec<&[f64]> = zero_set.iter().map(|&i| cs.marginals()[i].probs()).collect();
    let product = JointPmf::independent(&factors)?;
    let pin = SubsetConstraint::new(zero_set.to_vec(), product)?;
    let sys = cs.with_marginal_constraints().with_constraint(pin)?;
    maxent::feasibility(&sys)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsumptionReport {
    pub requested: usize,
    pub used: usize,
    pub discarded: usize,
    /// `max_J (c_J^{R*} - c_J^{R_a(P̃)})` over all samples; `≤ 0` up to rounding.
    pub max_violation: f64,
    pub worst_subset: Option<Vec<usize>>,
}

/// Samples consistent joints and checks that every improved bound is no
/// larger than the corresponding fixed-joint bound.
///
/// Samples are I-projections of random positive tensors (flat Dirichlet)
/// onto the constraint polytope; sample `k` draws from the stream `(seed, k)`.
pub fn subsumption_check(
    cs: &ConstraintSystem,
    samples: usize,
    seed: u64,
    opts: &MaxentOptions,
) -> Result<SubsumptionReport> {
    let rstar = build_rstar(cs, opts)?;
    let sys = cs.with_marginal_constraints();
    let cells = cs.alphabet().cells();
    let outcomes: Vec<Option<(f64, Vec<usize>)>> = (0..samples)
        .into_par_iter()
        .map(|k| -> Result<Option<(f64, Vec<usize>)>> {
            let mut rng = keyed_rng(&[seed, k as u64]);
            let init: Vec<f64> = (0..cells).map(|_| Exp1.sample(&mut rng)).collect::<Vec<f64>>();
            let r = maxent::project(&sys, &init, opts)?;
            if !r.is_converged() {
                return Ok(None);
            }
            let ra = build_ra_fixed(&r.distribution);
            let worst = rstar
                .entries()
                .iter()
                .zip(ra.entries())
                .map(|(a, b)| (a.bound - b.bound, a.subset.clone()))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .expect("nonempty region");
            Ok(Some(worst))
        })
        .collect::<Result<_>>()?;
    let used = outcomes.iter().flatten().count();
    let worst = outcomes
        .into_iter()
        .flatten()
        .fold(None::<(f64, Vec<usize>)>, |acc, w| match acc {
            Some(a) if a.0 >= w.0 => Some(a),
            _ => Some(w),
        });
    Ok(SubsumptionReport {
        requested: samples,
        used,
        discarded: samples - used,
        max_violation: worst.as_ref().map_or(f64::NEG_INFINITY, |w| w.0),
        worst_subset: worst.map(|w| w.1),
    })
}
