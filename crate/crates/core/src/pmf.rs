//! Dense joint PMFs over products of finite alphabets.
//!
//! Cells are stored row-major: the last variable varies fastest. All
//! information quantities are in bits, with `0 log 0 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Mass tolerance enforced on every stored PMF.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;
/// Entrywise tolerance used when comparing marginals of different constraints.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-9;

/// Cardinalities of the variables `0..N-1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Alphabet {
    sizes: Vec<usize>,
    cells: usize,
}

impl Alphabet {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return invalid("alphabet must have at least one variable");
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return invalid(format!("variable {i} has an empty alphabet"));
        }
        let cells = sizes
            .iter()
            .try_fold(1usize, |acc, &s| acc.checked_mul(s))
            .ok_or_else(|| Error::InvalidArgument("product alphabet too large to index".into()))?;
        Ok(Self { sizes, cells })
    }

    /// All variables binary.
    pub fn binary(n: usize) -> Self {
        Self::new(vec![2; n]).expect("binary alphabet")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_vars(&self) -> usize {
        self.sizes.len()
    }

    /// Number of cells of the product alphabet.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// The alphabet of the selected variables, in the given order.
    pub fn select(&self, subset: &[usize]) -> Result<Alphabet> {
        let sizes = subset
            .iter()
            .map(|&i| {
                self.sizes
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("variable {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Alphabet::new(sizes)
    }

    /// Symbols of a cell, one per variable.
    pub fn decode(&self, mut cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, &s) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = cell % s;
            cell /= s;
        }
        out
    }

    pub fn encode(&self, symbols: &[usize]) -> usize {
        symbols
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&x, &s)| acc * s + x)
    }
}

impl TryFrom<Vec<usize>> for Alphabet {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Alphabet::new(sizes)
    }
}

impl From<Alphabet> for Vec<usize> {
    fn from(a: Alphabet) -> Self {
        a.sizes
    }
}

/// Checks that `subset` is nonempty, strictly increasing and within `0..n`.
pub fn validate_subset(subset: &[usize], n: usize) -> Result<()> {
    if subset.is_empty() {
        return invalid("subset must be nonempty");
    }
    if subset.windows(2).any(|w| w[0] >= w[1]) {
        return invalid(format!("subset {subset:?} must be strictly increasing"));
    }
    if let Some(&last) = subset.last() {
        if last >= n {
            return invalid(format!("subset {subset:?} references a variable outside 0..{n}"));
        }
    }
    Ok(())
}

/// For each cell of `alphabet`, the index of its projection onto `subset`
/// inside the sub-alphabet. `subset` must be valid.
pub(crate) fn projection_map(alphabet: &Alphabet, subset: &[usize]) -> Vec<usize> {
    let sizes = alphabet.sizes();
    let n = sizes.len();
    let mut sub_stride = vec![0usize; n];
    let mut stride = 1;
    for &v in subset.iter().rev() {
        sub_stride[v] = stride;
        stride *= sizes[v];
    }
    let cells = alphabet.cells();
    let mut out = Vec::with_capacity(cells);
    let mut digits = vec![0usize; n];
    let mut idx = 0usize;
    for _ in 0..cells {
        out.push(idx);
        for v in (0..n).rev() {
            digits[v] += 1;
            idx += sub_stride[v];
            if digits[v] < sizes[v] {
                break;
            }
            idx -= sub_stride[v] * sizes[v];
            digits[v] = 0;
        }
    }
    out
}

#[derive(Deserialize)]
struct RawPmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

/// A probability tensor over a product alphabet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPmf")]
pub struct JointPmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl TryFrom<RawPmf> for JointPmf {
    type Error = Error;

    fn try_from(raw: RawPmf) -> Result<Self> {
        JointPmf::new(raw.alphabet, raw.probs)
    }
}

impl JointPmf {
    /// Normalizes `probs` and validates it against `alphabet`.
    pub fn new(alphabet: Alphabet, mut probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.cells() {
            return invalid(format!(
                "expected {} probabilities, got {}",
                alphabet.cells(),
                probs.len()
            ));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return invalid(format!("probabilities must be finite and nonnegative, got {p}"));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return invalid("probabilities sum to zero");
        }
        if total != 1.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return invalid(format!("normalization failed, mass {total}"));
        }
        Ok(Self { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let k = alphabet.cells();
        Self {
            alphabet,
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn point_mass(alphabet: Alphabet, cell: usize) -> Result<Self> {
        if cell >= alphabet.cells() {
            return invalid(format!("cell {cell} out of range"));
        }
        let mut probs = vec![0.0; alphabet.cells()];
        probs[cell] = 1.0;
        Ok(Self { alphabet, probs })
    }

    /// Joint of independent variables with the given one-dimensional PMFs.
    pub fn independent(factors: &[&[f64]]) -> Result<Self> {
        let sizes = factors.iter().map(|f| f.len()).collect();
        let alphabet = Alphabet::new(sizes)?;
        let mut probs = vec![1.0];
        for f in factors {
            probs = probs
                .iter()
                .flat_map(|&a| f.iter().map(move |&b| a * b))
                .collect();
        }
        Self::new(alphabet, probs)
    }

    /// Builds a PMF by evaluating `f` on the symbols of every cell.
    pub fn from_fn(alphabet: Alphabet, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let probs = (0..alphabet.cells())
            .map(|c| f(&alphabet.decode(c)))
            .collect();
        Self::new(alphabet, probs)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_vars(&self) -> usize {
        self.alphabet.num_vars()
    }

    /// Sums out every variable not in `subset`.
    pub fn marginalize(&self, subset: &[usize]) -> Result<JointPmf> {
        validate_subset(subset, self.num_vars())?;
        let sub = self.alphabet.select(subset)?;
        if subset.len() == self.num_vars() {
            return Ok(self.clone());
        }
        let map = projection_map(&self.alphabet, subset);
        let mut probs = vec![0.0; sub.cells()];
        for (&m, &p) in map.iter().zip(&self.probs) {
            probs[m] += p;
        }
        JointPmf::new(sub, probs)
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// `H(targets | given)` in bits. An empty `given` yields `H(targets)`.
    pub fn conditional_entropy(&self, targets: &[usize], given: &[usize]) -> Result<f64> {
        let n = self.num_vars();
        let mut seen = vec![false; n];
        for &i in targets.iter().chain(given) {
            if i >= n {
                return invalid(format!("variable {i} out of range"));
            }
            if seen[i] {
                return invalid(format!("variable {i} listed twice"));
            }
            seen[i] = true;
        }
        if targets.is_empty() {
            return Ok(0.0);
        }
        let mut union: Vec<usize> = targets.iter().chain(given).copied().collect();
        union.sort_unstable();
        let h_union = self.marginalize(&union)?.entropy();
        if given.is_empty() {
            return Ok(h_union);
        }
        let mut g = given.to_vec();
        g.sort_unstable();
        Ok(h_union - self.marginalize(&g)?.entropy())
    }

    /// Reorders the axes: variable `k` of the result is variable `perm[k]` of `self`.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<JointPmf> {
        let n = self.num_vars();
        let mut sorted = perm.to_vec();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return invalid(format!("{perm:?} is not a permutation of 0..{n}"));
        }
        let alphabet = self.alphabet.select(perm)?;
        let mut probs = vec![0.0; alphabet.cells()];
        let mut target = vec![0; n];
        for (c, &p) in self.probs.iter().enumerate() {
            let symbols = self.alphabet.decode(c);
            for (k, &v) in perm.iter().enumerate() {
                target[k] = symbols[v];
            }
            probs[alphabet.encode(&target)] = p;
        }
        JointPmf::new(alphabet, probs)
    }

    /// Max absolute entrywise difference; `None` if the alphabets differ.
    pub fn max_abs_diff(&self, other: &JointPmf) -> Option<f64> {
        (self.alphabet == other.alphabet).then(|| max_abs_diff(&self.probs, &other.probs))
    }
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn entropy(p: &JointPmf) -> f64 {
    p.entropy()
}

pub fn marginalize(p: &JointPmf, subset: &[usize]) -> Result<JointPmf> {
    p.marginalize(subset)
}

pub fn conditional_entropy(p: &JointPmf, targets: &[usize], given: &[usize]) -> Result<f64> {
    p.conditional_entropy(targets, given)
}

/// `D(p || q)` in bits; `+inf` when `p` is not absolutely continuous w.r.t. `q`.
pub fn kl_divergence(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.alphabet != q.alphabet {
        return invalid("kl_divergence requires identical alphabets");
    }
    let mut d = 0.0;
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            d += a * (a / b).log2();
        }
    }
    Ok(d.max(0.0))
}

/// `H_b(p)` in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("binary_entropy argument {p} outside [0, 1]"));
    }
    Ok(entropy_of(&[p, 1.0 - p]))
}

/// A target PMF for the variables of one subset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetConstraint {
    subset: Vec<usize>,
    target: JointPmf,
}

impl SubsetConstraint {
    pub fn new(subset: Vec<usize>, target: JointPmf) -> Result<Self> {
        if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!(
                "constraint subset {subset:?} must be nonempty and strictly increasing"
            ));
        }
        if target.num_vars() != subset.len() {
            return invalid(format!(
                "constraint on {subset:?} has a target over {} variables",
                target.num_vars()
            ));
        }
        Ok(Self { subset, target })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn target(&self) -> &JointPmf {
        &self.target
    }
}

/// A family of subset constraints together with the single-variable marginals.
///
/// Construction validates shapes only. Whether the constraints agree with one
/// another is answered by [`check_consistency`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstraintSystem {
    alphabet: Alphabet,
    constraints: Vec<SubsetConstraint>,
    marginals: Vec<JointPmf>,
}

impl ConstraintSystem {
    pub fn new(
        alphabet: Alphabet,
        constraints: Vec<SubsetConstraint>,
        marginals: Vec<JointPmf>,
    ) -> Result<Self> {
        let n = alphabet.num_vars();
        if marginals.len() != n {
            return invalid(format!("expected {n} marginals, got {}", marginals.len()));
        }
        for (i, m) in marginals.iter().enumerate() {
            if m.alphabet().sizes() != [alphabet.sizes()[i]] {
                return invalid(format!("marginal {i} does not match the alphabet"));
            }
        }
        for (j, c) in constraints.iter().enumerate() {
            validate_subset(c.subset(), n)?;
            if alphabet.select(c.subset())? != *c.target().alphabet() {
                return invalid(format!("constraint {j} target alphabet does not match its subset"));
            }
        }
        Ok(Self {
            alphabet,
            constraints,
            marginals,
        })
    }

    /// Constraints and marginals obtained by marginalizing one joint.
    pub fn from_joint(p: &JointPmf, subsets: &[Vec<usize>]) -> Result<Self> {
        let constraints = subsets
            .iter()
            .map(|s| SubsetConstraint::new(s.clone(), p.marginalize(s)?))
            .collect::<Result<Vec<_>>>()?;
        let marginals = (0..p.num_vars())
            .map(|i| p.marginalize(&[i]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p.alphabet().clone(), constraints, marginals)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_vars(&self) -> usize {
        self.alphabet.num_vars()
    }

    pub fn constraints(&self) -> &[SubsetConstraint] {
        &self.constraints
    }

    pub fn marginals(&self) -> &[JointPmf] {
        &self.marginals
    }

    /// `H(X_i)` of every stored marginal.
    pub fn marginal_entropies(&self) -> Vec<f64> {
        self.marginals.iter().map(JointPmf::entropy).collect()
    }

    /// Adds a constraint, validating its shape.
    pub fn with_constraint(&self, constraint: SubsetConstraint) -> Result<Self> {
        let mut constraints = self.constraints.clone();
        constraints.push(constraint);
        Self::new(self.alphabet.clone(), constraints, self.marginals.clone())
    }

    /// Appends a singleton constraint for every variable no constraint covers,
    /// so the polytope also pins those marginals.
    pub fn with_marginal_constraints(&self) -> Self {
        let mut covered = vec![false; self.num_vars()];
        for c in &self.constraints {
            for &i in c.subset() {
                covered[i] = true;
            }
        }
        let mut constraints = self.constraints.clone();
        for (i, _) in covered.iter().enumerate().filter(|(_, c)| !**c) {
            constraints.push(SubsetConstraint {
                subset: vec![i],
                target: self.marginals[i].clone(),
            });
        }
        Self {
            alphabet: self.alphabet.clone(),
            constraints,
            marginals: self.marginals.clone(),
        }
    }

    /// The system seen by the variables of `subset` alone: constraints
    /// `S_j ∩ subset` (nonempty ones) re-indexed to positions within `subset`.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        validate_subset(subset, self.num_vars())?;
        let alphabet = self.alphabet.select(subset)?;
        let mut constraints = Vec::new();
        for c in &self.constraints {
            let (local, positions): (Vec<usize>, Vec<usize>) = c
                .subset()
                .iter()
                .enumerate()
                .filter_map(|(pos, v)| subset.binary_search(v).ok().map(|k| (k, pos)))
                .unzip();
            if local.is_empty() {
                continue;
            }
            let target = c.target().marginalize(&positions)?;
            constraints.push(SubsetConstraint::new(local, target)?);
        }
        let marginals = subset.iter().map(|&i| self.marginals[i].clone()).collect();
        Self::new(alphabet, constraints, marginals)
    }
}

/// One side of a consistency comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConstraintRef {
    Constraint(usize),
    Marginal(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub first: ConstraintRef,
    pub second: ConstraintRef,
    pub intersection: Vec<usize>,
    pub deviation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_deviation(&self) -> f64 {
        self.violations.iter().map(|v| v.deviation).fold(0.0, f64::max)
    }
}

fn positions_in(subset: &[usize], vars: &[usize]) -> Vec<usize> {
    vars.iter()
        .map(|v| subset.binary_search(v).expect("variable in subset"))
        .collect()
}

/// Verifies that every constraint agrees with the stored marginals and that
/// constraints agree pairwise on their intersections.
pub fn check_consistency(cs: &ConstraintSystem) -> ConsistencyReport {
    let mut violations = Vec::new();
    let cons = cs.constraints();
    for (j, c) in cons.iter().enumerate() {
        for (pos, &i) in c.subset().iter().enumerate() {
            let m = c.target().marginalize(&[pos]).expect("valid position");
            let deviation = max_abs_diff(m.probs(), cs.marginals()[i].probs());
            if deviation > CONSISTENCY_TOLERANCE {
                violations.push(Violation {
                    first: ConstraintRef::Constraint(j),
                    second: ConstraintRef::Marginal(i),
                    intersection: vec![i],
                    deviation,
                });
            }
        }
    }
    for (j, a) in cons.iter().enumerate() {
        for (k, b) in cons.iter().enumerate().skip(j + 1) {
            let common: Vec<usize> = a
                .subset()
                .iter()
                .copied()
                .filter(|v| b.subset().binary_search(v).is_ok())
                .collect();
            if common.is_empty() {
                continue;
            }
            let ma = a.target().marginalize(&positions_in(a.subset(), &common));
            let mb = b.target().marginalize(&positions_in(b.subset(), &common));
            let deviation = max_abs_diff(ma.expect("valid").probs(), mb.expect("valid").probs());
            if deviation > CONSISTENCY_TOLERANCE {
                violations.push(Violation {
                    first: ConstraintRef::Constraint(j),
                    second: ConstraintRef::Constraint(k),
                    intersection: common,
                    deviation,
                });
            }
        }
    }
    ConsistencyReport { violations }
}

/// The product of the stored single-variable marginals.
pub fn product_of_marginals(cs: &ConstraintSystem) -> JointPmf {
    let factors: Vec<&[f64]> = cs.marginals().iter().map(JointPmf::probs).collect();
    JointPmf::independent(&factors).expect("marginals are valid PMFs")
}
