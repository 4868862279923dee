mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subset_typicality::maxent::{Feasibility, MaxentOptions};
use subset_typicality::pmf::{ConstraintSystem, JointPmf, SubsetConstraint};
use subset_typicality::regions::{
    build_ra_fixed, build_rstar, nonempty_subsets, point_in_system, ra_union_search,
    subsumption_check, zero_rate_certificate, MembershipStatus, RatePoint, UnionOptions,
};

use common::{all_pairs, random_family, random_joint, theorem2_system};

fn random_system(seed: u64, n: usize, count: usize, zeros: f64) -> (JointPmf, ConstraintSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_joint(&mut rng, vec![2; n], zeros);
    let family = random_family(&mut rng, n, count);
    (p.clone(), ConstraintSystem::from_joint(&p, &family).unwrap())
}

fn opts() -> MaxentOptions {
    MaxentOptions::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounds_never_exceed_the_entropy_sum(seed: u64, n in 2usize..=4, count in 1usize..=4, zeros in 0.0f64..0.4) {
        let (_, cs) = random_system(seed, n, count.min(n * (n - 1) / 2), zeros);
        let h = cs.marginal_entropies();
        for e in build_rstar(&cs, &opts()).unwrap().entries() {
            let sum: f64 = e.subset.iter().map(|&i| h[i]).sum();
            prop_assert!(e.bound <= sum + 1e-9);
        }
    }

    #[test]
    fn bounds_inside_a_constraint_use_its_marginal(seed: u64, n in 2usize..=4, count in 1usize..=4, zeros in 0.0f64..0.4) {
        let (p, cs) = random_system(seed, n, count.min(n * (n - 1) / 2), zeros);
        let h = cs.marginal_entropies();
        let rstar = build_rstar(&cs, &opts()).unwrap();
        for e in rstar.entries() {
            if cs.constraints().iter().any(|c| e.subset.iter().all(|i| c.subset().contains(i))) {
                let direct = e.subset.iter().map(|&i| h[i]).sum::<f64>()
                    - p.marginalize(&e.subset).unwrap().entropy();
                prop_assert!((e.bound - direct).abs() <= 1e-8, "{:?}", e.subset);
            }
        }
    }

    #[test]
    fn sampled_joints_are_subsumed(seed: u64, n in 3usize..=4, count in 2usize..=3) {
        let (_, cs) = random_system(seed, n, count, 0.2);
        let report = subsumption_check(&cs, 20, seed, &opts()).unwrap();
        prop_assert!(report.used > 0);
        prop_assert!(report.max_violation <= 1e-8, "{:?}", report);
    }
}

fn union_opts() -> UnionOptions {
    UnionOptions {
        iterations_per_stage: 60,
        ..UnionOptions::default()
    }
}

#[test]
fn union_inside_implies_rstar_inside() {
    let mut inside = 0;
    for seed in 0..16u64 {
        let (p, cs) = random_system(seed, 3, 2, 0.1);
        let ra = build_ra_fixed(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // a corner of the region of the generating joint, pushed in by 0.01
        let mut r = [0.0; 3];
        for e in ra.entries() {
            let have: f64 = e.subset.iter().map(|&i| r[i]).sum();
            if have < e.bound {
                let i = e.subset[rng.random_range(0..e.subset.len())];
                r[i] += e.bound - have;
            }
        }
        let r = RatePoint::new(r.iter().map(|v| v + 0.01).collect()).unwrap();
        let union = ra_union_search(&r, &cs, &union_opts()).unwrap();
        assert_eq!(union.verdict.status, MembershipStatus::Inside, "seed {seed}: {:?}", union.verdict);
        let rstar = build_rstar(&cs, &opts()).unwrap();
        assert_eq!(point_in_system(&r, &rstar).unwrap().status, MembershipStatus::Inside);
        inside += 1;

        // random points: an inside union verdict must carry over
        for _ in 0..4 {
            let q = RatePoint::new((0..3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
            let v = ra_union_search(&q, &cs, &union_opts()).unwrap().verdict;
            if v.status == MembershipStatus::Inside {
                assert_eq!(point_in_system(&q, &rstar).unwrap().status, MembershipStatus::Inside);
            }
            if let Some(ub) = v.margin_upper_bound {
                assert!(ub >= v.margin - 1e-12);
            }
        }
    }
    assert_eq!(inside, 16);
}

#[test]
fn smoothed_objective_never_decreases() {
    for seed in 0..8u64 {
        let (_, cs) = random_system(seed, 3, 3, 0.1);
        let r = RatePoint::new(vec![0.3, 0.2, 0.4]).unwrap();
        let search = ra_union_search(&r, &cs, &union_opts()).unwrap();
        assert_eq!(search.stage_objectives.len(), 5);
        for stage in &search.stage_objectives {
            for w in stage.windows(2) {
                assert!(w[1] >= w[0] - 1e-10, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn singleton_constraints_give_zero_joint_bounds() {
    let (p, _) = random_system(3, 3, 1, 0.0);
    let singles: Vec<Vec<usize>> = (0..3).map(|i| vec![i]).collect();
    let cs = ConstraintSystem::from_joint(&p, &singles).unwrap();
    let rstar = build_rstar(&cs, &opts()).unwrap();
    let ra = build_ra_fixed(&p);
    for (a, b) in rstar.entries().iter().zip(ra.entries()) {
        assert!(a.bound.abs() <= 1e-9);
        if a.subset.len() == 1 {
            assert!((a.bound - b.bound).abs() <= 1e-12);
        }
    }
}

#[test]
fn fully_pinned_system_matches_the_fixed_region() {
    let (p, _) = random_system(5, 4, 1, 0.2);
    let cs = ConstraintSystem::from_joint(&p, &[vec![0, 1, 2, 3]]).unwrap();
    let rstar = build_rstar(&cs, &opts()).unwrap();
    let ra = build_ra_fixed(&p);
    assert_eq!(rstar.entries().len(), nonempty_subsets(4).len());
    for (a, b) in rstar.entries().iter().zip(ra.entries()) {
        assert_eq!(a.subset, b.subset);
        assert!((a.bound - b.bound).abs() <= 1e-8);
    }
    assert!(subsumption_check(&cs, 10, 1, &opts()).unwrap().max_violation <= 1e-8);
}

/// Checks the Farkas vector against an independently assembled `A x = b`.
fn verify_farkas(sys: &ConstraintSystem, farkas: &[f64]) {
    let alphabet = sys.alphabet();
    let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
    for c in sys.constraints() {
        let sub = alphabet.select(c.subset()).unwrap();
        for (a, &t) in c.target().probs().iter().enumerate() {
            let on = (0..alphabet.cells())
                .filter(|&cell| {
                    let x = alphabet.decode(cell);
                    let y: Vec<usize> = c.subset().iter().map(|&i| x[i]).collect();
                    sub.encode(&y) == a
                })
                .collect();
            rows.push((on, t));
        }
    }
    rows.push(((0..alphabet.cells()).collect(), 1.0));
    assert_eq!(rows.len(), farkas.len());
    let yb: f64 = rows.iter().zip(farkas).map(|((_, b), y)| y * b).sum();
    assert!(yb > 1e-6, "y·b = {yb}");
    for cell in 0..alphabet.cells() {
        let col: f64 = rows
            .iter()
            .zip(farkas)
            .filter(|((on, _), _)| on.contains(&cell))
            .map(|(_, y)| y)
            .sum();
        assert!(col <= 1e-9, "column {cell}: {col}");
    }
}

#[test]
fn zero_rate_certificate_is_a_valid_farkas_vector() {
    let cs = theorem2_system();
    let cert = zero_rate_certificate(&cs, &[0, 1, 2]).unwrap();
    let Feasibility::Infeasible { certificate, .. } = cert else {
        panic!("expected infeasible");
    };
    let factors: Vec<&[f64]> = (0..3).map(|i| cs.marginals()[i].probs()).collect();
    let pin = SubsetConstraint::new(vec![0, 1, 2], JointPmf::independent(&factors).unwrap()).unwrap();
    let sys = cs.with_marginal_constraints().with_constraint(pin).unwrap();
    verify_farkas(&sys, &certificate.farkas);
}

#[test]
fn zero_rates_are_allowed_when_independence_is_consistent() {
    let p = JointPmf::independent(&[&[0.5, 0.5], &[0.25, 0.75], &[0.6, 0.4]]).unwrap();
    let cs = ConstraintSystem::from_joint(&p, &all_pairs(3)).unwrap();
    assert!(zero_rate_certificate(&cs, &[0, 1, 2]).unwrap().is_feasible());
    let r = RatePoint::new(vec![0.0; 3]).unwrap();
    let v = ra_union_search(&r, &cs, &union_opts()).unwrap().verdict;
    assert_eq!(v.status, MembershipStatus::Inside);
}
