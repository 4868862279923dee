//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subset_typicality::cli::{self, manifest_path};
use subset_typicality::covering::{self, ExponentMode, TypicalityKind, TypicalityParams};
use subset_typicality::gray_wyner::{evaluate_gw_region, GWInstance};
use subset_typicality::maxent::{self, Feasibility, MaxentOptions};
use subset_typicality::pmf::{Alphabet, ConstraintSystem, JointPmf};
use subset_typicality::regions::{self, RatePoint, UnionOptions};

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let opts = MaxentOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_product = 0.0f64;
    let mut worst_full = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=4);
        let zeros = if rng.random::<bool>() { 0.3 } else { 0.0 };
        let p = random_joint(&mut rng, vec![2; n], zeros);

        let singles: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let cs = ConstraintSystem::from_joint(&p, &singles).unwrap();
        let r = maxent::maxent(&cs, &opts).unwrap();
        let product = JointPmf::from_fn(p.alphabet().clone(), |x| {
            x.iter()
                .enumerate()
                .map(|(i, &a)| p.marginalize(&[i]).unwrap().probs()[a])
                .product()
        })
        .unwrap();
        worst_product = worst_product.max(r.distribution.max_abs_diff(&product).unwrap());

        let full = ConstraintSystem::from_joint(&p, &[(0..n).collect()]).unwrap();
        let r = maxent::maxent(&full, &opts).unwrap();
        worst_full = worst_full.max(r.distribution.max_abs_diff(&p).unwrap());
    }
    outcome(
        worst_product <= 1e-9 && worst_full <= 1e-9,
        format!("max deviation: product {worst_product:.2e}, full-set {worst_full:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let opts = MaxentOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for _ in 0..50 {
        let n = rng.random_range(3..=4);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
        let p = random_joint(&mut rng, sizes, 0.0);
        let count = rng.random_range(2..=4);
        let family = random_family(&mut rng, n, count);
        let cs = ConstraintSystem::from_joint(&p, &family).unwrap();
        let r = maxent::maxent(&cs, &opts).unwrap();
        if !r.is_converged() {
            unconverged += 1;
            continue;
        }
        worst = worst.max(gibbs_residual(&cs, &r.distribution));
    }
    outcome(
        unconverged == 0 && worst <= 1e-6,
        format!("max least-squares residual {worst:.2e}, unconverged {unconverged}"),
    )
}

fn criterion_3() -> Outcome {
    let report = cli::repro_theorem2(&MaxentOptions::default(), &UnionOptions::default()).unwrap();
    let h123 = report
        .h_star
        .iter()
        .find(|e| e.subset == [0, 1, 2])
        .unwrap()
        .h_star_bits;
    let a = (h123 - 3.0).abs() <= 1e-8;
    let expected = hb(0.25) - 0.5;
    let b = report.pair_bounds.iter().all(|c| (c - expected).abs() <= 1e-8);
    let c = match &report.zero_rate_certificate {
        Feasibility::Infeasible { certificate, .. } => certificate.phase_one_objective > 0.0,
        Feasibility::Feasible { .. } => false,
    };
    let upper = report.ra_union_verdict.margin_upper_bound.unwrap();
    let d = report.rstar_verdict.margin >= -1e-7 && upper <= -1e-4;
    outcome(
        a && b && c && d,
        format!(
            "(a) H*={h123:.9} (b) c_i4={:?} vs {expected:.9} (c) infeasible={c} (d) R*-margin {:.2e}, union bound {upper:.4}",
            report.pair_bounds.iter().map(|v| format!("{v:.9}")).collect::<Vec<_>>(),
            report.rstar_verdict.margin
        ),
    )
}

fn criterion_4() -> Outcome {
    let r = regions::subsumption_check(&theorem2_system(), 100, 404, &MaxentOptions::default()).unwrap();
    outcome(
        r.used == 100 && r.max_violation <= 1e-8,
        format!("samples used {}, max violation {:.2e}", r.used, r.max_violation),
    )
}

fn criterion_5() -> Outcome {
    let p = JointPmf::new(Alphabet::binary(2), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let cs = ConstraintSystem::from_joint(&p, &[vec![0, 1]]).unwrap();
    let ns: Vec<usize> = (4..=13).collect();
    let table = covering::exponent_probe(
        &cs,
        &ns,
        0.05,
        TypicalityKind::Absolute,
        ExponentMode::Exact,
        &[],
        &MaxentOptions::default(),
    )
    .unwrap();
    let gap = |n: usize| {
        let row = table.rows.iter().find(|r| r.n == n).unwrap();
        row.value.map_or(f64::INFINITY, |v| (v - 1.0).abs())
    };
    let (g4, g13) = (gap(4), gap(13));
    outcome(
        (table.reference - 1.0).abs() < 1e-9 && g13 < g4 && g13 <= 0.3,
        format!("H(P*)={:.6}, gap n=4 {g4:.4}, gap n=13 {g13:.4}", table.reference),
    )
}

fn criterion_6() -> Outcome {
    let p = JointPmf::new(Alphabet::binary(2), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
    let cs = ConstraintSystem::from_joint(&p, &[vec![0, 1]]).unwrap();
    let tp = TypicalityParams::new(12, 0.1).unwrap();
    let run = |r: f64| {
        covering::run_trials(&cs, &RatePoint::new(vec![r, r]).unwrap(), &tp, &[], 200, 606).unwrap()
    };
    let high = run(0.75);
    let low = run(0.25);
    let frac = |o: &[covering::TrialOutcome]| {
        o.iter().filter(|t| t.search.found.is_some()).count() as f64 / o.len() as f64
    };
    let flips = low
        .iter()
        .zip(&high)
        .filter(|(l, h)| l.search.found.is_some() && h.search.found.is_none())
        .count();
    let (fh, fl) = (frac(&high), frac(&low));
    outcome(
        fh - fl >= 0.3 && flips == 0,
        format!("success 0.75: {fh:.3}, 0.25: {fl:.3}, found->not-found flips {flips}"),
    )
}

fn criterion_7() -> Outcome {
    let opts = MaxentOptions::default();
    let source = JointPmf::new(
        Alphabet::binary(3),
        vec![0.22, 0.08, 0.1, 0.05, 0.15, 0.1, 0.2, 0.1],
    )
    .unwrap();
    let h = source.entropy();
    let hx: Vec<f64> = (0..3).map(|i| source.marginalize(&[i]).unwrap().entropy()).collect();

    let copy = GWInstance::deterministic(source.clone(), [8, 1, 1, 1], |x| {
        [x[0] * 4 + x[1] * 2 + x[2], 0, 0, 0]
    })
    .unwrap();
    let region = evaluate_gw_region(&copy, &opts).unwrap();
    let r123 = region.bound("R123").unwrap();
    let private: Vec<f64> = ["R1", "R2", "R3"].iter().map(|l| region.bound(l).unwrap()).collect();
    let copy_ok = (r123 - h).abs() <= 1e-9 && private.iter().all(|b| b.abs() <= 1e-9);

    let constant = GWInstance::deterministic(source, [1, 1, 1, 1], |_| [0; 4]).unwrap();
    let region = evaluate_gw_region(&constant, &opts).unwrap();
    let private_ok = ["R1", "R2", "R3"]
        .iter()
        .zip(&hx)
        .all(|(l, h)| (region.bound(l).unwrap() - h).abs() <= 1e-9);
    let branch_max = region
        .bounds
        .iter()
        .filter(|b| b.rates.len() > 1 || b.label == "R123")
        .map(|b| b.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        copy_ok && private_ok && branch_max <= 1e-9,
        format!(
            "copy: R123 bound {r123:.9} vs H(X) {h:.9}, private {private:?}; constant: private ok {private_ok}, max common bound {branch_max:.1e}"
        ),
    )
}

fn run_to_file(args: &[&str], dir: &std::path::Path, tag: &str, threads: usize) -> Option<String> {
    let out = dir.join(tag);
    let mut full: Vec<String> = std::iter::once("subtyp".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    full.push("--out".into());
    full.push(out.to_string_lossy().into_owned());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let code = pool.install(|| cli::run(full, &mut std::io::sink(), &mut std::io::sink()));
    if code != 0 {
        return None;
    }
    let text = std::fs::read_to_string(manifest_path(&out)).ok()?;
    let manifest: serde_json::Value = serde_json::from_str(&text).ok()?;
    let digest = manifest["output_sha256"].as_str()?.to_string();
    let bytes = std::fs::read(&out).ok()?;
    (cli::digest(&bytes) == digest).then_some(digest)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let commands: [&[&str]; 4] = [
        &[
            "cover", "--instance", "builtin:pair-covering", "--rates", "0.5,0.5", "--n", "10",
            "--eps", "0.1", "--trials", "60", "--seed", "8",
        ],
        &[
            "exponent", "--instance", "builtin:pair-covering", "--mode", "montecarlo", "--nmin",
            "2", "--nmax", "6", "--eps", "0.2", "--budget", "20000", "--seed", "8",
        ],
        &[
            "cover", "--instance", "builtin:theorem2", "--rates", "0.3,0.3,0.3,0.6", "--n", "6",
            "--eps", "0.2", "--trials", "20", "--seed", "9",
        ],
        &["member", "--instance", "builtin:theorem2", "--point", "0,0,0,1.9", "--region", "ra-union"],
    ];
    let mut mismatches = Vec::new();
    for (k, args) in commands.iter().enumerate() {
        let a = run_to_file(args, dir.path(), &format!("{k}a"), 1);
        let b = run_to_file(args, dir.path(), &format!("{k}b"), 4);
        if a.is_none() || a != b {
            mismatches.push(args[0]);
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{} commands rerun on 1 and 4 threads, mismatches {mismatches:?}", commands.len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("maxent identities", criterion_1, Duration::from_secs(5)),
        ("Gibbs form", criterion_2, Duration::MAX),
        ("counterexample reproduction", criterion_3, Duration::from_secs(60)),
        ("subsumption", criterion_4, Duration::MAX),
        ("exact exponent", criterion_5, Duration::from_secs(120)),
        ("covering simulation", criterion_6, Duration::MAX),
        ("Gray-Wyner degenerate cases", criterion_7, Duration::MAX),
        ("determinism", criterion_8, Duration::MAX),
    ];
    let mut failures = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= *budget;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {}: {} [{name}] {} ({:.2}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
