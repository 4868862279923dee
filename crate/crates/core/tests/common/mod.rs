#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use subset_typicality::pmf::{Alphabet, ConstraintSystem, JointPmf};

/// Joint with iid exponential weights; `zero_prob` of the cells set to zero.
pub fn random_joint(rng: &mut ChaCha8Rng, sizes: Vec<usize>, zero_prob: f64) -> JointPmf {
    let alphabet = Alphabet::new(sizes).unwrap();
    loop {
        let probs: Vec<f64> = (0..alphabet.cells())
            .map(|_| {
                if rng.random::<f64>() < zero_prob {
                    0.0
                } else {
                    -rng.random::<f64>().max(1e-300).ln()
                }
            })
            .collect();
        if probs.iter().any(|&p| p > 0.0) {
            return JointPmf::new(alphabet.clone(), probs).unwrap();
        }
    }
}

pub fn all_pairs(n: usize) -> Vec<Vec<usize>> {
    (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| vec![i, j]))
        .collect()
}

/// Distinct random subsets of size 2..=3 (at most `n`) of `0..n`.
pub fn random_family(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    while out.len() < count {
        let k = rng.random_range(2..=3.min(n));
        let mut s: Vec<usize> = (0..n).collect();
        for i in 0..n {
            let j = rng.random_range(i..n);
            s.swap(i, j);
        }
        let mut s = s[..k].to_vec();
        s.sort_unstable();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// The four-bit joint whose six pair marginals define the counterexample:
/// X3 = 1 xor X1 xor X2, X4 = X1 and X2.
pub fn theorem2_witness() -> JointPmf {
    JointPmf::from_fn(Alphabet::binary(4), |x| {
        if x[2] == 1 ^ x[0] ^ x[1] && x[3] == (x[0] & x[1]) {
            0.25
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn theorem2_system() -> ConstraintSystem {
    ConstraintSystem::from_joint(&theorem2_witness(), &all_pairs(4)).unwrap()
}

pub fn hb(p: f64) -> f64 {
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Largest absolute residual of the least-squares fit of `ln P*` on the
/// support by indicator features of every constraint cell plus a constant.
pub fn gibbs_residual(cs: &ConstraintSystem, p: &JointPmf) -> f64 {
    let alphabet = cs.alphabet();
    let support: Vec<usize> = (0..alphabet.cells()).filter(|&c| p.probs()[c] > 0.0).collect();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; support.len()]];
    for c in cs.constraints() {
        let sub = alphabet.select(c.subset()).unwrap();
        for a in 0..sub.cells() {
            columns.push(
                support
                    .iter()
                    .map(|&cell| {
                        let x = alphabet.decode(cell);
                        let xs: Vec<usize> = c.subset().iter().map(|&v| x[v]).collect();
                        f64::from(sub.encode(&xs) == a)
                    })
                    .collect(),
            );
        }
    }
    let a = DMatrix::from_fn(support.len(), columns.len(), |r, c| columns[c][r]);
    let y = DVector::from_iterator(support.len(), support.iter().map(|&c| p.probs()[c].ln()));
    // orthonormal column-space basis u = A v / sqrt(λ) from the eigenpairs of
    // the Gram matrix; nalgebra's SVD is inaccurate on these 0/1 matrices
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let tol = 1e-10 * eig.eigenvalues.max();
    let mut fitted = DVector::zeros(y.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let u = &a * eig.eigenvectors.column(k) / lambda.sqrt();
            fitted += &u * u.dot(&y);
        }
    }
    (y - fitted).amax()
}
