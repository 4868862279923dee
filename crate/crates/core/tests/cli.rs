use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use subset_typicality::cli::{self, digest, manifest_path, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};

fn subtyp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subtyp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn in_process(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("subtyp").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn maxent_reports_the_full_set_entropy() {
    let o = subtyp(&["--instance", "builtin:theorem2", "maxent"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let v = stdout_json(&o);
    assert!((v["entropy_bits"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    let manifest: Value = serde_json::from_slice(o.stderr.trim_ascii_end()).unwrap();
    assert_eq!(manifest["output_sha256"], digest(&o.stdout));
    assert_eq!(manifest["command"], "maxent");
}

#[test]
fn corner_point_is_inside_the_improved_region() {
    let a4 = format!("{:.6}", 1.0 + 0.811_278_124_459_132_9 + 1e-6);
    let point = format!("0,0,0,{a4}");
    let o = subtyp(&["--instance", "builtin:theorem2", "member", "--point", &point, "--region", "rstar"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert_eq!(stdout_json(&o)["status"], "inside");
}

#[test]
fn cover_without_a_seed_is_a_usage_error() {
    let o = subtyp(&["--instance", "builtin:pair-covering", "cover", "--rates", "0.5,0.5", "--n", "6", "--eps", "0.1"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors() {
    for args in [
        vec!["frobnicate"],
        vec!["--instance", "builtin:nope", "maxent"],
        vec!["--instance", "builtin:theorem2", "--format", "csv", "maxent"],
        vec!["--instance", "builtin:theorem2", "member", "--point", "1,2", "--region", "rstar"],
    ] {
        let (code, out, _) = in_process(&args);
        assert_eq!(code, EXIT_USAGE, "{args:?}");
        assert!(out.is_empty(), "{args:?}");
    }
}

#[test]
fn feasibility_exit_codes() {
    let o = subtyp(&["--instance", "builtin:theorem2", "feasibility"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert_eq!(stdout_json(&o)["verdict"], "FEASIBLE");

    let mut inst: Value = serde_json::from_str(subset_typicality::instance::THEOREM2).unwrap();
    inst["constraints"]
        .as_array_mut()
        .unwrap()
        .push(serde_json::json!({"subset": [0, 1, 2], "pmf": [1, 1, 1, 1, 1, 1, 1, 1]}));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("independent.json");
    std::fs::write(&path, inst.to_string()).unwrap();
    let o = subtyp(&["--instance", path.to_str().unwrap(), "feasibility"]);
    assert_eq!(o.status.code(), Some(EXIT_INFEASIBLE));
    assert_eq!(stdout_json(&o)["verdict"], "INFEASIBLE");
}

#[test]
fn region_table_has_one_row_per_subset() {
    let (code, out, _) = in_process(&["--instance", "builtin:theorem2", "region", "--which", "rstar"]);
    assert_eq!(code, EXIT_OK);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("subset_mask,bound_bits"));
    let rows: Vec<(u32, f64)> = lines
        .map(|l| {
            let (m, b) = l.split_once(',').unwrap();
            (m.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 15);
    let full = rows.iter().find(|r| r.0 == 0b1111).unwrap().1;
    assert!((full - (3.0 + 0.811_278_124_459_132_9 - 2.0)).abs() < 1e-8);
}

#[test]
fn outputs_and_manifests_go_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp.csv");
    let args = [
        "--instance", "builtin:pair-covering", "--out", out.to_str().unwrap(),
        "exponent", "--mode", "exact", "--nmax", "6", "--eps", "0.1",
    ];
    let o = subtyp(&args);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert!(o.stdout.is_empty());
    let body = std::fs::read(&out).unwrap();
    assert!(body.starts_with(b"n,exponent,reference\n"));
    assert_eq!(body.iter().filter(|&&b| b == b'\n').count(), 7);
    let manifest: Value = serde_json::from_slice(&std::fs::read(manifest_path(&out)).unwrap()).unwrap();
    assert_eq!(manifest["output_sha256"], digest(&body));
    assert!(Path::new(&manifest_path(&out)).exists());

    let again = subtyp(&args);
    assert_eq!(again.status.code(), Some(EXIT_OK));
    assert_eq!(std::fs::read(&out).unwrap(), body);
}

#[test]
fn seeded_cover_runs_repeat_exactly() {
    let args = [
        "--instance", "builtin:pair-covering", "--seed", "42",
        "cover", "--rates", "0.75,0.75", "--n", "8", "--eps", "0.1", "--trials", "50",
    ];
    let a = subtyp(&args);
    let b = subtyp(&args);
    assert_eq!(a.status.code(), Some(EXIT_OK));
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    assert_eq!(v["trials"], 50);
    assert_eq!(v["seed"], 42);
}

#[test]
fn gray_wyner_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gw.json");
    let text = r#"{
        "alphabet": [2, 2, 2],
        "source": [1, 1, 1, 1, 1, 1, 1, 1],
        "u_alphabet": [8, 1, 1, 1],
        "channel": [[1,0,0,0,0,0,0,0],[0,1,0,0,0,0,0,0],[0,0,1,0,0,0,0,0],[0,0,0,1,0,0,0,0],
                    [0,0,0,0,1,0,0,0],[0,0,0,0,0,1,0,0],[0,0,0,0,0,0,1,0],[0,0,0,0,0,0,0,1]]
    }"#;
    std::fs::write(&path, text).unwrap();
    let (code, out, _) = in_process(&["--instance", path.to_str().unwrap(), "gray-wyner"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("label,bound_bits\n"));
    assert!(out.lines().any(|l| l.starts_with("R123,3.0000")));
    let (code, out, _) = in_process(&[
        "--instance", path.to_str().unwrap(),
        "gray-wyner", "--point", "0.01,0.01,0.01,0.01,0.01,0.01,3.01",
    ]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["status"], "inside");
}

#[test]
fn repro_reports_every_step() {
    let (code, out, _) = in_process(&["repro-theorem2"]);
    assert_eq!(code, EXIT_OK);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["h_star"].as_array().unwrap().len(), 15);
    assert_eq!(v["rstar_verdict"]["status"], "inside");
    assert_eq!(v["ra_union_verdict"]["status"], "outside");
    assert_eq!(v["zero_rate_certificate"]["verdict"], "INFEASIBLE");
}
