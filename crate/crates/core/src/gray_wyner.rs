//! Achievable region of the three-user lossless Gray-Wyner network for a
//! given test channel.
//!
//! The seven-variable joint is ordered `[U123, U12, U13, U23, X1, X2, X3]`.
//! Sink `s` receives `U123` and the two pairwise branches containing `s`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::maxent::{self, MaxentOptions, MaxentStatus};
use crate::pmf::{Alphabet, ConstraintSystem, JointPmf};
use crate::regions::{MembershipStatus, MembershipVerdict, INSIDE_TOLERANCE};

pub const U123: usize = 0;
pub const X: [usize; 3] = [4, 5, 6];
/// Pairwise branches `(i, j, variable)` with 1-based sink indices.
pub const BRANCHES: [(usize, usize, usize); 3] = [(1, 2, 1), (1, 3, 2), (2, 3, 3)];

const MARGINAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum GwRate {
    R1,
    R2,
    R3,
    R12,
    R13,
    R23,
    R123,
}

impl GwRate {
    pub const ALL: [GwRate; 7] = [
        GwRate::R1,
        GwRate::R2,
        GwRate::R3,
        GwRate::R12,
        GwRate::R13,
        GwRate::R23,
        GwRate::R123,
    ];

    fn private(sink: usize) -> Self {
        [GwRate::R1, GwRate::R2, GwRate::R3][sink - 1]
    }

    fn branch(var: usize) -> Self {
        [GwRate::R12, GwRate::R13, GwRate::R23][var - 1]
    }

    pub fn name(self) -> &'static str {
        match self {
            GwRate::R1 => "R1",
            GwRate::R2 => "R2",
            GwRate::R3 => "R3",
            GwRate::R12 => "R12",
            GwRate::R13 => "R13",
            GwRate::R23 => "R23",
            GwRate::R123 => "R123",
        }
    }
}

/// The two branch variables that reach `sink` (1-based).
pub fn branches_of(sink: usize) -> [usize; 2] {
    let mut out = BRANCHES
        .iter()
        .filter(|(i, j, _)| *i == sink || *j == sink)
        .map(|b| b.2);
    [out.next().expect("two branches"), out.next().expect("two branches")]
}

#[derive(Clone, Debug, PartialEq)]
pub struct GWInstance {
    source: JointPmf,
    u_sizes: [usize; 4],
    joint: JointPmf,
}

impl GWInstance {
    /// `channel[x][u]` is `P(u | x)`, rows indexed by source cell and columns
    /// by the row-major cell of `(U123, U12, U13, U23)`.
    pub fn from_channel(source: JointPmf, u_sizes: [usize; 4], channel: &[Vec<f64>]) -> Result<Self> {
        if source.num_vars() != 3 {
            return invalid("the source must have three variables");
        }
        let u_alphabet = Alphabet::new(u_sizes.to_vec())?;
        let xc = source.alphabet().cells();
        let uc = u_alphabet.cells();
        if channel.len() != xc || channel.iter().any(|r| r.len() != uc) {
            return invalid(format!("channel must be {xc} rows of {uc} entries"));
        }
        for (x, row) in channel.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > MARGINAL_TOLERANCE
            {
                return invalid(format!("channel row {x} is not a probability vector"));
            }
        }
        let mut sizes = u_sizes.to_vec();
        sizes.extend_from_slice(source.alphabet().sizes());
        let mut probs = vec![0.0; uc * xc];
        for (x, row) in channel.iter().enumerate() {
            for (u, p) in row.iter().enumerate() {
                probs[u * xc + x] = source.probs()[x] * p;
            }
        }
        let joint = JointPmf::new(Alphabet::new(sizes)?, probs)?;
        Ok(Self {
            source,
            u_sizes,
            joint,
        })
    }

    /// Channel where the `U`s are functions of the source symbols.
    pub fn deterministic(
        source: JointPmf,
        u_sizes: [usize; 4],
        f: impl Fn(&[usize]) -> [usize; 4],
    ) -> Result<Self> {
        let u_alphabet = Alphabet::new(u_sizes.to_vec())?;
        let channel: Vec<Vec<f64>> = (0..source.alphabet().cells())
            .map(|x| {
                let u = f(&source.alphabet().decode(x));
                let mut row = vec![0.0; u_alphabet.cells()];
                row[u_alphabet.encode(&u)] = 1.0;
                row
            })
            .collect();
        Self::from_channel(source, u_sizes, &channel)
    }

    /// Wraps a seven-variable joint; its X-marginal becomes the source.
    pub fn from_joint(joint: JointPmf) -> Result<Self> {
        if joint.num_vars() != 7 {
            return invalid("a Gray-Wyner joint has seven variables");
        }
        let s = joint.alphabet().sizes();
        let u_sizes = [s[0], s[1], s[2], s[3]];
        let source = joint.marginalize(&X)?;
        Ok(Self {
            source,
            u_sizes,
            joint,
        })
    }

    pub fn source(&self) -> &JointPmf {
        &self.source
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    pub fn u_sizes(&self) -> [usize; 4] {
        self.u_sizes
    }

    /// Constraints `(S_j ∪ {X_j})` for each sink, plus the full X-joint.
    pub fn constraint_system(&self) -> ConstraintSystem {
        let mut subsets: Vec<Vec<usize>> = (1..=3)
            .map(|s| {
                let [a, b] = branches_of(s);
                vec![U123, a, b, X[s - 1]]
            })
            .collect();
        subsets.push(X.to_vec());
        ConstraintSystem::from_joint(&self.joint, &subsets).expect("subsets are valid")
    }

    fn entropy(&self, vars: &[usize]) -> f64 {
        let mut v = vars.to_vec();
        v.sort_unstable();
        self.joint.marginalize(&v).expect("valid subset").entropy()
    }

    fn cond_entropy(&self, targets: &[usize], given: &[usize]) -> f64 {
        self.joint
            .conditional_entropy(targets, given)
            .expect("valid subsets")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GWRates {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r12: f64,
    pub r13: f64,
    pub r23: f64,
    pub r123: f64,
}

impl GWRates {
    /// From `[r1, r2, r3, r12, r13, r23, r123]`.
    pub fn from_slice(r: &[f64]) -> Result<Self> {
        if r.len() != 7 {
            return invalid(format!("expected 7 rates, got {}", r.len()));
        }
        if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("rates must be finite and nonnegative");
        }
        Ok(Self {
            r1: r[0],
            r2: r[1],
            r3: r[2],
            r12: r[3],
            r13: r[4],
            r23: r[5],
            r123: r[6],
        })
    }

    pub fn get(&self, rate: GwRate) -> f64 {
        match rate {
            GwRate::R1 => self.r1,
            GwRate::R2 => self.r2,
            GwRate::R3 => self.r3,
            GwRate::R12 => self.r12,
            GwRate::R13 => self.r13,
            GwRate::R23 => self.r23,
            GwRate::R123 => self.r123,
        }
    }
}

/// `H*({U}_J | X)` together with the range it must fall in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HStarTerm {
    pub u: Vec<usize>,
    pub value: f64,
    /// `H({U}_J | X)` under the instance joint, which is feasible.
    pub instance_value: f64,
    /// `Σ log2 |U_j|`.
    pub ceiling: f64,
}

/// `Σ_{r ∈ rates} R_r ≥ bound`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GwBound {
    pub label: String,
    pub rates: Vec<GwRate>,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GwRegion {
    pub bounds: Vec<GwBound>,
    pub h_star: Vec<HStarTerm>,
}

impl GwRegion {
    pub fn bound(&self, label: &str) -> Option<f64> {
        self.bounds.iter().find(|b| b.label == label).map(|b| b.bound)
    }

    /// `label,bound_bits` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,bound_bits\n");
        for b in &self.bounds {
            out.push_str(&format!("{},{:.12}\n", b.label, b.bound));
        }
        out
    }
}

fn bound(rates: Vec<GwRate>, value: f64) -> GwBound {
    let label = rates.iter().map(|r| r.name()).collect::<Vec<_>>().join("+");
    GwBound {
        label,
        rates,
        bound: value,
    }
}

fn h_star(cs: &ConstraintSystem, inst: &GWInstance, u: &[usize], opts: &MaxentOptions) -> Result<HStarTerm> {
    let r = maxent::conditional_maxent(cs, u, &X, opts)?;
    let mut term: Vec<usize> = u.iter().copied().chain(X).collect();
    term.sort_unstable();
    match r.status {
        MaxentStatus::Converged => {}
        MaxentStatus::InfeasibleDetected => return Err(Error::Infeasible { subset: term }),
        MaxentStatus::IterationLimit => {
            return Err(Error::NotConverged {
                subset: term,
                residual: r.residual,
            })
        }
    }
    Ok(HStarTerm {
        u: u.to_vec(),
        value: r.entropy_bits,
        instance_value: inst.cond_entropy(u, &X),
        ceiling: u.iter().map(|&j| (inst.u_sizes[j] as f64).log2()).sum(),
    })
}

/// All bound families: `R123`, `R123 + R_ij` per branch, `R123 + R_ij + R_ik`
/// per sink, the sum of all common rates, and `R_s` per sink.
pub fn evaluate_gw_region(inst: &GWInstance, opts: &MaxentOptions) -> Result<GwRegion> {
    let cs = inst.constraint_system();
    let mut u_sets: Vec<Vec<usize>> = vec![vec![U123]];
    u_sets.extend(BRANCHES.iter().map(|b| vec![U123, b.2]));
    u_sets.extend((1..=3).map(|s| {
        let [a, b] = branches_of(s);
        vec![U123, a, b]
    }));
    u_sets.push(vec![0, 1, 2, 3]);
    let terms: Vec<HStarTerm> = u_sets
        .par_iter()
        .map(|u| h_star(&cs, inst, u, opts))
        .collect::<Result<_>>()?;
    let find = |u: &[usize]| terms.iter().find(|t| t.u == u).expect("computed").value;

    let h_u123 = inst.entropy(&[U123]);
    let given_common = |b: usize| inst.cond_entropy(&[b], &[U123]);
    let mut bounds = vec![bound(vec![GwRate::R123], h_u123 - find(&[U123]))];
    for &(_, _, b) in &BRANCHES {
        bounds.push(bound(
            vec![GwRate::R123, GwRate::branch(b)],
            inst.entropy(&[U123, b]) - find(&[U123, b]),
        ));
    }
    for s in 1..=3 {
        let [a, b] = branches_of(s);
        bounds.push(bound(
            vec![GwRate::R123, GwRate::branch(a), GwRate::branch(b)],
            h_u123 - find(&[U123, a, b]) + given_common(a) + given_common(b),
        ));
    }
    bounds.push(bound(
        vec![GwRate::R123, GwRate::R12, GwRate::R13, GwRate::R23],
        h_u123 + (1..=3).map(given_common).sum::<f64>() - find(&[0, 1, 2, 3]),
    ));
    for s in 1..=3 {
        let [a, b] = branches_of(s);
        bounds.push(bound(
            vec![GwRate::private(s)],
            inst.cond_entropy(&[X[s - 1]], &[U123, a, b]),
        ));
    }
    Ok(GwRegion {
        bounds,
        h_star: terms,
    })
}

pub fn gw_point_check(region: &GwRegion, r: &GWRates) -> MembershipVerdict {
    let margin = region
        .bounds
        .iter()
        .map(|b| b.rates.iter().map(|&x| r.get(x)).sum::<f64>() - b.bound)
        .fold(f64::INFINITY, f64::min);
    MembershipVerdict {
        status: if margin >= -INSIDE_TOLERANCE {
            MembershipStatus::Inside
        } else {
            MembershipStatus::Outside
        },
        margin,
        margin_upper_bound: None,
        witness: None,
    }
}
