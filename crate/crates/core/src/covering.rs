//! Random-coding experiments: codebooks, subset typicality, covering search
//! and typical-set counting.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::maxent::{self, MaxentOptions, MaxentStatus};
use crate::pmf::{Alphabet, ConstraintSystem, JointPmf};
use crate::regions::RatePoint;
use crate::rng::{derive_seed, keyed_rng};

/// Largest search space, tuple count or type count, as a power of two.
pub const DEFAULT_CAP_LOG2: u32 = 26;
/// Fewest samples accepted by the Monte Carlo exponent mode.
pub const MIN_MONTE_CARLO_BUDGET: u64 = 10_000;

const BOUNDARY_SLACK: f64 = 1e-12;
const WILSON_Z: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypicalityKind {
    /// `|π(a) - P(a)| ≤ ε`.
    #[default]
    Absolute,
    /// `|π(a) - P(a)| ≤ ε·P(a)`.
    Robust,
}

/// Both kinds also require `π(a) = 0` wherever `P(a) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityParams {
    pub n: usize,
    pub epsilon: f64,
    pub kind: TypicalityKind,
}

impl TypicalityParams {
    pub fn new(n: usize, epsilon: f64) -> Result<Self> {
        Self::with_kind(n, epsilon, TypicalityKind::default())
    }

    pub fn with_kind(n: usize, epsilon: f64, kind: TypicalityKind) -> Result<Self> {
        if n == 0 {
            return invalid("block length must be at least 1");
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return invalid(format!("epsilon must lie in (0, 1), got {epsilon}"));
        }
        Ok(Self { n, epsilon, kind })
    }

    fn cell_ok(&self, count: usize, p: f64) -> bool {
        if p <= 0.0 {
            return count == 0;
        }
        let dev = (count as f64 / self.n as f64 - p).abs();
        match self.kind {
            TypicalityKind::Absolute => dev <= self.epsilon + BOUNDARY_SLACK,
            TypicalityKind::Robust => dev <= self.epsilon * p + BOUNDARY_SLACK,
        }
    }
}

/// Per-constraint data for counting joint symbols of the selected coordinates.
struct ConstraintView {
    subset: Vec<usize>,
    strides: Vec<usize>,
    target: Vec<f64>,
    /// Map from full-alphabet cell to sub-cell.
    projection: Vec<usize>,
}

fn views(cs: &ConstraintSystem) -> Vec<ConstraintView> {
    let sizes = cs.alphabet().sizes();
    cs.constraints()
        .iter()
        .map(|c| {
            let subset = c.subset().to_vec();
            let mut strides = vec![0; subset.len()];
            let mut s = 1;
            for (k, &v) in subset.iter().enumerate().rev() {
                strides[k] = s;
                s *= sizes[v];
            }
            ConstraintView {
                projection: crate::pmf::projection_map(cs.alphabet(), &subset),
                subset,
                strides,
                target: c.target().probs().to_vec(),
            }
        })
        .collect()
}

impl ConstraintView {
    fn typical_seqs(&self, seqs: &[&[usize]], tp: &TypicalityParams, counts: &mut Vec<usize>) -> bool {
        counts.clear();
        counts.resize(self.target.len(), 0);
        for t in 0..tp.n {
            let cell: usize = self
                .subset
                .iter()
                .zip(&self.strides)
                .map(|(&v, &s)| seqs[v][t] * s)
                .sum();
            if self.target[cell] <= 0.0 {
                return false;
            }
            counts[cell] += 1;
        }
        counts.iter().zip(&self.target).all(|(&c, &p)| tp.cell_ok(c, p))
    }

    fn typical_type(&self, joint_counts: &[usize], tp: &TypicalityParams, counts: &mut Vec<usize>) -> bool {
        counts.clear();
        counts.resize(self.target.len(), 0);
        for (cell, &c) in joint_counts.iter().enumerate() {
            counts[self.projection[cell]] += c;
        }
        counts.iter().zip(&self.target).all(|(&c, &p)| tp.cell_ok(c, p))
    }
}

/// Whether the empirical joint type of every constrained subset is typical
/// for its target. `seqs` holds one length-`n` sequence per variable.
pub fn is_subset_typical(
    seqs: &[Vec<usize>],
    cs: &ConstraintSystem,
    tp: &TypicalityParams,
) -> Result<bool> {
    if seqs.len() != cs.num_vars() {
        return invalid(format!("expected {} sequences, got {}", cs.num_vars(), seqs.len()));
    }
    for (i, s) in seqs.iter().enumerate() {
        if s.len() != tp.n {
            return invalid(format!("sequence {i} has length {}, expected {}", s.len(), tp.n));
        }
        let size = cs.alphabet().sizes()[i];
        if let Some(x) = s.iter().find(|&&x| x >= size) {
            return invalid(format!("sequence {i} has symbol {x} outside 0..{size}"));
        }
    }
    let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
    let mut counts = Vec::new();
    Ok(views(cs).iter().all(|v| v.typical_seqs(&refs, tp, &mut counts)))
}

/// Per-variable symbol law: a marginal, or a conditional table given parents.
#[derive(Clone, Debug)]
enum SymbolLaw {
    Marginal(Vec<f64>),
    Conditional {
        parents: Vec<usize>,
        parent_sizes: Vec<usize>,
        /// Row per parent-symbol tuple (row-major); empty rows fall back to `fallback`.
        rows: Vec<Vec<f64>>,
        fallback: Vec<f64>,
    },
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

impl SymbolLaw {
    fn draw(&self, rng: &mut ChaCha8Rng, parent_seqs: &[&[usize]], n: usize) -> Vec<usize> {
        match self {
            SymbolLaw::Marginal(p) => (0..n).map(|_| sample_index(p, rng.random())).collect(),
            SymbolLaw::Conditional {
                parent_sizes,
                rows,
                fallback,
                ..
            } => (0..n)
                .map(|t| {
                    let row = parent_seqs
                        .iter()
                        .zip(parent_sizes)
                        .fold(0, |acc, (s, &size)| acc * size + s[t]);
                    let probs = if rows[row].is_empty() { fallback } else { &rows[row] };
                    sample_index(probs, rng.random())
                })
                .collect(),
        }
    }
}

/// Conditioning parents per variable: `(child, parents)` pairs.
pub type ParentMap = [(usize, Vec<usize>)];

/// Builds the symbol law of every variable and checks the parent map: parents
/// must be distinct, must not themselves have parents, and each child together
/// with its parents must lie inside one constrained subset.
fn symbol_laws(cs: &ConstraintSystem, superposition: &ParentMap) -> Result<Vec<SymbolLaw>> {
    let n = cs.num_vars();
    let mut parents_of: Vec<Option<&[usize]>> = vec![None; n];
    for (child, parents) in superposition {
        if *child >= n {
            return invalid(format!("superposition child {child} outside 0..{n}"));
        }
        if parents_of[*child].is_some() {
            return invalid(format!("variable {child} listed twice in the parent map"));
        }
        crate::pmf::validate_subset(parents, n)?;
        if parents.contains(child) {
            return invalid(format!("variable {child} cannot be its own parent"));
        }
        parents_of[*child] = Some(parents);
    }
    for (child, parents) in superposition {
        if let Some(&p) = parents.iter().find(|&&p| parents_of[p].is_some()) {
            return invalid(format!(
                "parent {p} of variable {child} is itself conditioned; only one level of superposition is supported"
            ));
        }
    }
    let mut laws = Vec::with_capacity(n);
    for (i, parents) in parents_of.iter().enumerate() {
        let marginal = cs.marginals()[i].probs().to_vec();
        let Some(parents) = parents else {
            laws.push(SymbolLaw::Marginal(marginal));
            continue;
        };
        let mut family: Vec<usize> = parents.iter().copied().chain([i]).collect();
        family.sort_unstable();
        let Some(c) = cs
            .constraints()
            .iter()
            .find(|c| family.iter().all(|v| c.subset().contains(v)))
        else {
            return invalid(format!(
                "variable {i} with parents {parents:?} is not inside any constrained subset"
            ));
        };
        let pos = |v: usize| c.subset().iter().position(|&x| x == v).expect("member");
        let order: Vec<usize> = parents.iter().map(|&p| pos(p)).chain([pos(i)]).collect();
        let local = c.target().permute_axes(&reorder_to_front(&order, c.subset().len()))?;
        let local = local.marginalize(&(0..order.len()).collect::<Vec<_>>())?;
        let size_i = cs.alphabet().sizes()[i];
        let rows = local
            .probs()
            .chunks(size_i)
            .map(|row| {
                let z: f64 = row.iter().sum();
                if z > 0.0 {
                    row.iter().map(|p| p / z).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        laws.push(SymbolLaw::Conditional {
            parents: parents.to_vec(),
            parent_sizes: parents.iter().map(|&p| cs.alphabet().sizes()[p]).collect(),
            rows,
            fallback: marginal,
        });
    }
    Ok(laws)
}

/// Permutation that moves the axes listed in `front` to the front, keeping
/// the rest in order.
fn reorder_to_front(front: &[usize], len: usize) -> Vec<usize> {
    front
        .iter()
        .copied()
        .chain((0..len).filter(|a| !front.contains(a)))
        .collect()
}

/// Checks a parent map against the constraint system without generating codebooks.
pub fn check_superposition(cs: &ConstraintSystem, superposition: &ParentMap) -> Result<()> {
    symbol_laws(cs, superposition).map(|_| ())
}

/// Codewords of one variable. A conditioned variable holds one block of
/// `size` entries per parent index tuple, blocks in row-major parent order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Codebook {
    pub variable: usize,
    pub rate_bits: f64,
    pub parent_set: Vec<usize>,
    pub seed: u64,
    /// `2^⌈n·rate_bits⌉`.
    pub size: usize,
    parent_sizes: Vec<usize>,
    entries: Vec<Vec<usize>>,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Codeword `m` under the given parent indices (empty when unconditioned).
    pub fn entry(&self, parent_indices: &[usize], m: usize) -> &[usize] {
        let block = parent_indices
            .iter()
            .zip(&self.parent_sizes)
            .fold(0, |acc, (&k, &s)| acc * s + k);
        &self.entries[block * self.size + m]
    }

    pub fn entries(&self) -> &[Vec<usize>] {
        &self.entries
    }
}

fn codebook_log2_size(n: usize, rate: f64) -> u32 {
    (n as f64 * rate - 1e-9).ceil().max(0.0) as u32
}

/// Draws nested codebooks: entry `m` of variable `i` under parent indices `t`
/// comes from the stream `(master_seed, i, t, m)`, so enlarging a codebook
/// keeps its earlier entries.
pub fn generate_codebooks(
    cs: &ConstraintSystem,
    rates: &RatePoint,
    tp: &TypicalityParams,
    superposition: &ParentMap,
    master_seed: u64,
) -> Result<Vec<Codebook>> {
    let n_vars = cs.num_vars();
    if rates.len() != n_vars {
        return invalid(format!("{} rates for {n_vars} variables", rates.len()));
    }
    let laws = symbol_laws(cs, superposition)?;
    let log_sizes: Vec<u32> = rates
        .rates()
        .iter()
        .map(|&r| codebook_log2_size(tp.n, r))
        .collect();
    let total_log2 = (0..n_vars)
        .map(|i| {
            let parents = match &laws[i] {
                SymbolLaw::Conditional { parents, .. } => parents.as_slice(),
                SymbolLaw::Marginal(_) => &[],
            };
            let bits = log_sizes[i] + parents.iter().map(|&p| log_sizes[p]).sum::<u32>();
            2f64.powi(bits as i32)
        })
        .sum::<f64>()
        .log2();
    if total_log2 > DEFAULT_CAP_LOG2 as f64 {
        return Err(Error::TooLarge {
            log2_size: total_log2,
            cap_log2: DEFAULT_CAP_LOG2,
        });
    }

    let generate_one = |i: usize| -> Result<Codebook> {
        let size = 1usize << log_sizes[i];
        let (parents, parent_sizes) = match &laws[i] {
            SymbolLaw::Marginal(_) => (Vec::new(), Vec::new()),
            SymbolLaw::Conditional { parents, .. } => (
                parents.clone(),
                parents.iter().map(|&p| 1usize << log_sizes[p]).collect::<Vec<_>>(),
            ),
        };
        let blocks: usize = parent_sizes.iter().product();
        let mut entries = Vec::with_capacity(blocks * size);
        let mut digits = vec![0usize; parents.len()];
        for _ in 0..blocks {
            for m in 0..size {
                let mut key = vec![master_seed, i as u64, digits.len() as u64];
                key.extend(digits.iter().map(|&d| d as u64));
                key.push(m as u64);
                let mut rng = keyed_rng(&key);
                let parent_seqs: Vec<&[usize]> = Vec::new();
                let seq = match &laws[i] {
                    SymbolLaw::Marginal(_) => laws[i].draw(&mut rng, &parent_seqs, tp.n),
                    SymbolLaw::Conditional { .. } => {
                        // parents are unconditioned, so their codewords depend on
                        // their own index only
                        let seqs: Vec<Vec<usize>> = parents
                            .iter()
                            .zip(&digits)
                            .map(|(&p, &k)| {
                                let mut prng = keyed_rng(&[master_seed, p as u64, 0, k as u64]);
                                laws[p].draw(&mut prng, &[], tp.n)
                            })
                            .collect();
                        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
                        laws[i].draw(&mut rng, &refs, tp.n)
                    }
                };
                entries.push(seq);
            }
            for (d, &s) in digits.iter_mut().zip(&parent_sizes).rev() {
                *d += 1;
                if *d < s {
                    break;
                }
                *d = 0;
            }
        }
        Ok(Codebook {
            variable: i,
            rate_bits: rates.rates()[i],
            parent_set: parents,
            seed: master_seed,
            size,
            parent_sizes,
            entries,
        })
    };
    (0..n_vars).map(generate_one).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchOutcome {
    /// Zero-based codeword indices of the first typical tuple.
    pub found: Option<Vec<usize>>,
    /// Tuples up to and including the first success in lexicographic order,
    /// or the whole product space.
    pub searched: u64,
}

/// Lexicographic search for an index tuple whose codewords are subset
/// typical. Partial tuples are abandoned as soon as a fully assigned
/// constraint fails.
pub fn covering_search(
    codebooks: &[Codebook],
    cs: &ConstraintSystem,
    tp: &TypicalityParams,
) -> Result<SearchOutcome> {
    covering_search_capped(codebooks, cs, tp, DEFAULT_CAP_LOG2)
}

pub fn covering_search_capped(
    codebooks: &[Codebook],
    cs: &ConstraintSystem,
    tp: &TypicalityParams,
    cap_log2: u32,
) -> Result<SearchOutcome> {
    let n_vars = cs.num_vars();
    if codebooks.len() != n_vars || codebooks.iter().enumerate().any(|(i, c)| c.variable != i) {
        return invalid("need one codebook per variable, in variable order");
    }
    let log2_space: f64 = codebooks.iter().map(|c| (c.size as f64).log2()).sum();
    if log2_space > cap_log2 as f64 {
        return Err(Error::TooLarge {
            log2_size: log2_space,
            cap_log2,
        });
    }
    // a variable's codeword is known once it and all its parents are assigned
    let resolved: Vec<usize> = codebooks
        .iter()
        .map(|c| c.parent_set.iter().copied().fold(c.variable, usize::max))
        .collect();
    let views = views(cs);
    let mut checks_at: Vec<Vec<usize>> = vec![Vec::new(); n_vars];
    for (j, v) in views.iter().enumerate() {
        let depth = v.subset.iter().map(|&i| resolved[i]).max().expect("nonempty");
        checks_at[depth].push(j);
    }
    let mut resolves_at: Vec<Vec<usize>> = vec![Vec::new(); n_vars];
    for (i, &d) in resolved.iter().enumerate() {
        resolves_at[d].push(i);
    }

    struct Search<'a> {
        codebooks: &'a [Codebook],
        views: &'a [ConstraintView],
        checks_at: &'a [Vec<usize>],
        resolves_at: &'a [Vec<usize>],
        tp: &'a TypicalityParams,
        index: Vec<usize>,
        words: Vec<&'a [usize]>,
        counts: Vec<usize>,
    }

    impl<'a> Search<'a> {
        fn dfs(&mut self, depth: usize) -> bool {
            if depth == self.codebooks.len() {
                return true;
            }
            for m in 0..self.codebooks[depth].size {
                self.index[depth] = m;
                for &i in &self.resolves_at[depth] {
                    let cb = &self.codebooks[i];
                    let parents: Vec<usize> = cb.parent_set.iter().map(|&p| self.index[p]).collect();
                    self.words[i] = cb.entry(&parents, self.index[i]);
                }
                let ok = self.checks_at[depth].iter().all(|&j| {
                    self.views[j].typical_seqs(&self.words, self.tp, &mut self.counts)
                });
                if ok && self.dfs(depth + 1) {
                    return true;
                }
            }
            false
        }
    }

    let mut search = Search {
        codebooks,
        views: &views,
        checks_at: &checks_at,
        resolves_at: &resolves_at,
        tp,
        index: vec![0; n_vars],
        words: vec![&[][..]; n_vars],
        counts: Vec::new(),
    };
    let space: u64 = codebooks.iter().map(|c| c.size as u64).product();
    if search.dfs(0) {
        let rank = search
            .index
            .iter()
            .zip(codebooks)
            .fold(0u64, |acc, (&m, c)| acc * c.size as u64 + m as u64);
        Ok(SearchOutcome {
            found: Some(search.index),
            searched: rank + 1,
        })
    } else {
        Ok(SearchOutcome {
            found: None,
            searched: space,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub search: SearchOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverReport {
    pub trials: usize,
    pub successes: usize,
    pub searched_tuples_mean: f64,
    pub wilson_interval: (f64, f64),
    pub seed: u64,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Per-trial seed: trial `k` uses `derive_seed([master_seed, k])`.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    derive_seed(&[master_seed, trial as u64])
}

/// Runs independent generate-and-search experiments, in trial order.
pub fn run_trials(
    cs: &ConstraintSystem,
    rates: &RatePoint,
    tp: &TypicalityParams,
    superposition: &ParentMap,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(master_seed, trial);
            let books = generate_codebooks(cs, rates, tp, superposition, seed)?;
            let search = covering_search(&books, cs, tp)?;
            Ok(TrialOutcome { trial, seed, search })
        })
        .collect()
}

pub fn summarize(outcomes: &[TrialOutcome], master_seed: u64) -> CoverReport {
    let trials = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.search.found.is_some()).count();
    let searched: f64 = outcomes.iter().map(|o| o.search.searched as f64).sum();
    CoverReport {
        trials,
        successes,
        searched_tuples_mean: if trials == 0 { 0.0 } else { searched / trials as f64 },
        wilson_interval: wilson_interval(successes, trials),
        seed: master_seed,
    }
}

pub fn estimate_cover_prob(
    cs: &ConstraintSystem,
    rates: &RatePoint,
    tp: &TypicalityParams,
    superposition: &ParentMap,
    trials: usize,
    master_seed: u64,
) -> Result<CoverReport> {
    if trials == 0 {
        return invalid("need at least one trial");
    }
    let outcomes = run_trials(cs, rates, tp, superposition, trials, master_seed)?;
    Ok(summarize(&outcomes, master_seed))
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn log2_binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).log2()).sum()
}

/// Number of tuples of `n`-sequences whose joint type passes every
/// constraint, summed over joint type classes (multinomial weights).
pub fn count_typical_types(cs: &ConstraintSystem, tp: &TypicalityParams) -> Result<u128> {
    let k = cs.alphabet().cells();
    let n = tp.n;
    let types_log2 = log2_binomial((n + k - 1) as u64, (k - 1) as u64);
    if types_log2 > DEFAULT_CAP_LOG2 as f64 {
        return Err(Error::TooLarge {
            log2_size: types_log2,
            cap_log2: DEFAULT_CAP_LOG2,
        });
    }
    if n as f64 * (k as f64).log2() >= 127.0 {
        return invalid("tuple count does not fit in 128 bits");
    }
    let views = views(cs);

    struct Walk<'a> {
        views: &'a [ConstraintView],
        tp: &'a TypicalityParams,
        counts: Vec<usize>,
        scratch: Vec<usize>,
        total: u128,
    }

    impl Walk<'_> {
        fn rec(&mut self, cell: usize, remaining: usize, weight: u128) {
            let last = self.counts.len() - 1;
            if cell == last {
                self.counts[cell] = remaining;
                let tp = self.tp;
                let ok = self
                    .views
                    .iter()
                    .all(|v| v.typical_type(&self.counts, tp, &mut self.scratch));
                if ok {
                    self.total += weight;
                }
                return;
            }
            for c in 0..=remaining {
                self.counts[cell] = c;
                self.rec(cell + 1, remaining - c, weight * binomial(remaining as u64, c as u64));
            }
        }
    }

    let mut walk = Walk {
        views: &views,
        tp,
        counts: vec![0; k],
        scratch: Vec::new(),
        total: 0,
    };
    walk.rec(0, n, 1);
    Ok(walk.total)
}

/// Same count as [`count_typical_types`], by visiting every tuple.
pub fn count_typical_bruteforce(cs: &ConstraintSystem, tp: &TypicalityParams) -> Result<u128> {
    let k = cs.alphabet().cells();
    let log2_space = tp.n as f64 * (k as f64).log2();
    if log2_space > DEFAULT_CAP_LOG2 as f64 {
        return Err(Error::TooLarge {
            log2_size: log2_space,
            cap_log2: DEFAULT_CAP_LOG2,
        });
    }
    let views = views(cs);
    let space = (k as u64).pow(tp.n as u32);
    let alphabet: &Alphabet = cs.alphabet();
    let hits = (0..space)
        .into_par_iter()
        .map_init(
            || (vec![vec![0usize; tp.n]; cs.num_vars()], Vec::new()),
            |(seqs, counts), code| {
                let mut rest = code;
                for t in 0..tp.n {
                    let symbols = alphabet.decode((rest % k as u64) as usize);
                    rest /= k as u64;
                    for (s, &x) in seqs.iter_mut().zip(&symbols) {
                        s[t] = x;
                    }
                }
                let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
                views.iter().all(|v| v.typical_seqs(&refs, tp, counts)) as u64
            },
        )
        .sum::<u64>();
    Ok(hits as u128)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ExponentMode {
    /// Exact count of typical tuples; value is `log2(count)/n`.
    Exact,
    /// Probability that a tuple drawn from the generation measure is typical;
    /// value is `-log2(p̂)/n`.
    MonteCarlo { budget: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentRow {
    pub n: usize,
    /// `None` when no typical tuple was seen.
    pub value: Option<f64>,
    pub reference: f64,
    pub count: Option<u128>,
    pub hits: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentTable {
    pub mode: ExponentMode,
    pub epsilon: f64,
    pub kind: TypicalityKind,
    pub reference: f64,
    pub rows: Vec<ExponentRow>,
}

impl ExponentTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,exponent,reference\n");
        for r in &self.rows {
            let v = r.value.map_or("inf".to_string(), |v| format!("{v:.12}"));
            out.push_str(&format!("{},{},{:.12}\n", r.n, v, r.reference));
        }
        out
    }
}

fn solved_entropy(cs: &ConstraintSystem, opts: &MaxentOptions) -> Result<f64> {
    let r = maxent::maxent(cs, opts)?;
    match r.status {
        MaxentStatus::Converged => Ok(r.entropy_bits),
        MaxentStatus::InfeasibleDetected => Err(Error::Infeasible {
            subset: (0..cs.num_vars()).collect(),
        }),
        MaxentStatus::IterationLimit => Err(Error::NotConverged {
            subset: (0..cs.num_vars()).collect(),
            residual: r.residual,
        }),
    }
}

/// Typical-set size or probability per block length, with the reference
/// exponent: `H(P*)` over the constraints for exact counts, and
/// `Σ H(X_i | X_{A_i}) - H(P*)` (marginals included) for sampled probabilities.
pub fn exponent_probe(
    cs: &ConstraintSystem,
    ns: &[usize],
    epsilon: f64,
    kind: TypicalityKind,
    mode: ExponentMode,
    superposition: &ParentMap,
    opts: &MaxentOptions,
) -> Result<ExponentTable> {
    let params: Vec<TypicalityParams> = ns
        .iter()
        .map(|&n| TypicalityParams::with_kind(n, epsilon, kind))
        .collect::<Result<_>>()?;
    let (reference, rows) = match mode {
        ExponentMode::Exact => {
            if !superposition.is_empty() {
                return invalid("exact mode counts tuples; a parent map has no effect there");
            }
            let reference = solved_entropy(cs, opts)?;
            let rows = params
                .iter()
                .map(|tp| {
                    let count = count_typical_types(cs, tp)?;
                    Ok(ExponentRow {
                        n: tp.n,
                        value: (count > 0).then(|| (count as f64).log2() / tp.n as f64),
                        reference,
                        count: Some(count),
                        hits: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (reference, rows)
        }
        ExponentMode::MonteCarlo { budget, seed } => {
            if budget < MIN_MONTE_CARLO_BUDGET {
                return invalid(format!(
                    "Monte Carlo budget must be at least {MIN_MONTE_CARLO_BUDGET}, got {budget}"
                ));
            }
            let laws = symbol_laws(cs, superposition)?;
            let h_star = solved_entropy(&cs.with_marginal_constraints(), opts)?;
            let mut generation = 0.0;
            for (i, law) in laws.iter().enumerate() {
                generation += match law {
                    SymbolLaw::Marginal(p) => crate::pmf::entropy_of(p),
                    SymbolLaw::Conditional { parents, .. } => {
                        let c = cs
                            .constraints()
                            .iter()
                            .find(|c| parents.iter().chain([&i]).all(|v| c.subset().contains(v)))
                            .expect("checked by symbol_laws");
                        let local = |vars: &[usize]| -> Vec<usize> {
                            vars.iter()
                                .map(|v| c.subset().iter().position(|x| x == v).expect("member"))
                                .collect()
                        };
                        c.target()
                            .conditional_entropy(&local(&[i]), &local(parents))?
                    }
                };
            }
            let reference = generation - h_star;
            let rows = params
                .iter()
                .map(|tp| {
                    let hits = monte_carlo_hits(cs, &laws, tp, budget, seed);
                    let p = hits as f64 / budget as f64;
                    ExponentRow {
                        n: tp.n,
                        value: (hits > 0).then(|| -p.log2() / tp.n as f64),
                        reference,
                        count: None,
                        hits: Some(hits),
                    }
                })
                .collect();
            (reference, rows)
        }
    };
    Ok(ExponentTable {
        mode,
        epsilon,
        kind,
        reference,
        rows,
    })
}

fn monte_carlo_hits(
    cs: &ConstraintSystem,
    laws: &[SymbolLaw],
    tp: &TypicalityParams,
    budget: u64,
    seed: u64,
) -> u64 {
    const BLOCK: u64 = 1024;
    let views = views(cs);
    let blocks = budget.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = keyed_rng(&[seed, tp.n as u64, b]);
            let mut counts = Vec::new();
            let mut hits = 0;
            for _ in b * BLOCK..((b + 1) * BLOCK).min(budget) {
                let mut seqs: Vec<Vec<usize>> = vec![Vec::new(); laws.len()];
                // unconditioned variables first, then children
                for (i, law) in laws.iter().enumerate() {
                    if let SymbolLaw::Marginal(_) = law {
                        seqs[i] = law.draw(&mut rng, &[], tp.n);
                    }
                }
                for (i, law) in laws.iter().enumerate() {
                    if let SymbolLaw::Conditional { parents, .. } = law {
                        let refs: Vec<&[usize]> =
                            parents.iter().map(|&p| seqs[p].as_slice()).collect();
                        seqs[i] = law.draw(&mut rng, &refs, tp.n);
                    }
                }
                let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
                if views.iter().all(|v| v.typical_seqs(&refs, tp, &mut counts)) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Joint type of `n` iid draws from `p`, as symbol sequences per variable.
pub fn sample_iid(p: &JointPmf, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut seqs = vec![Vec::with_capacity(n); p.num_vars()];
    for _ in 0..n {
        let cell = sample_index(p.probs(), rng.random());
        for (s, x) in seqs.iter_mut().zip(p.alphabet().decode(cell)) {
            s.push(x);
        }
    }
    seqs
}
