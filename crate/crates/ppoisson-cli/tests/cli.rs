use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppoisson::io::read_binary;
use ppoisson::solve::poisson_solve;
use ppoisson::verify::estimates::smooth_source;
use ppoisson::{Domain, SolverConfig};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ppoisson"));
    c.env_remove("PPOISSON_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn schema_path(cmd: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{cmd}.v1.json"))
}

/// Parse stdout and validate it against the shipped schema for `cmd`.
fn validated(out: &Output, cmd: &str) -> Value {
    assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let schema: Value = serde_json::from_reader(File::open(schema_path(cmd)).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(&doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{cmd}: {errors:?}");
    doc
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn interval_reports_open_upper_end_as_null() {
    let doc = validated(&run(&["interval", "--domain", "torus:2:32:1"]), "interval");
    let r = &doc["result"];
    assert_eq!(r["p_lo"], 1.0);
    assert!(r["p_hi"].is_null());
    assert_eq!(r["delta_x"], 0.0);
}

#[test]
fn solve_p2_dumps_the_poisson_solution_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "--p", "2", "--domain", "torus:2:16", "--out-dir", dir.path().to_str().unwrap(), "--field-format", "bin"]);
    let doc = validated(&out, "solve");
    assert_eq!(doc["result"]["p"], 2.0);
    let field = read_binary(File::open(dir.path().join("solve_u.bin")).unwrap()).unwrap();
    let d = Domain::torus(2, 16, 1.0).unwrap();
    let f = smooth_source(&d);
    let direct = poisson_solve(&d, &f, SolverConfig::new(2.0).poisson_tol).unwrap();
    assert_eq!(field.values, direct.0);
    let saved: Value = serde_json::from_reader(File::open(dir.path().join("solve.json")).unwrap()).unwrap();
    assert_eq!(without_timestamp(saved), without_timestamp(doc));
}

#[test]
fn solve_accepts_infinite_truncation_in_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[solver]\neps_schedule = [1e-2, 1e-4, 1e-6]\nm_schedule = [10, 100, \"inf\"]\n").unwrap();
    let out = run(&["solve", "--p", "1.5", "--domain", "circle:64", "--config", cfg.to_str().unwrap()]);
    let doc = validated(&out, "solve");
    let r = &doc["result"];
    assert!(r["m_final"].is_null());
    assert_eq!(r["stages"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_reads_a_csv_source() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("f.csv");
    let mut body = String::from("vertex,c0\n");
    for i in 0..32 {
        body += &format!("{i},{}\n", (i as f64 * std::f64::consts::PI / 16.0).sin() + 3.0);
    }
    std::fs::write(&src, body).unwrap();
    let src = src.to_str().unwrap();
    let out = run(&["solve", "--p", "3", "--domain", "circle:32", "--rhs", src]);
    assert_eq!(out.status.code(), Some(3), "uncentered source is a configuration error");
    let out = run(&["solve", "--p", "3", "--domain", "circle:32", "--rhs", src, "--center-rhs"]);
    validated(&out, "solve");
    let out = run(&["solve", "--p", "3", "--domain", "circle:64", "--rhs", src, "--center-rhs"]);
    assert_eq!(out.status.code(), Some(3), "size mismatch");
}

#[test]
fn eigen_report_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["eigen", "--p", "2.5", "--domain", "circle:64", "--restarts", "2"])
        .env("PPOISSON_OUT_DIR", dir.path())
        .output()
        .unwrap();
    let doc = validated(&out, "eigen");
    assert!(doc["result"]["lambda"].as_f64().unwrap() > 0.0);
    assert_eq!(doc["result"]["restart_lambdas"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("eigen_u.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn verify_is_deterministic_given_seed() {
    let args = ["verify", "--suite", "algebra", "--seed", "7", "--samples", "20000"];
    let a = validated(&run(&args), "verify");
    let b = validated(&run(&args), "verify");
    assert_eq!(without_timestamp(a.clone()), without_timestamp(b));
    let reports = a["result"].as_array().unwrap();
    assert_eq!(reports.len(), 5);
    assert!(reports.iter().all(|r| r["pass"] == true));
}

#[test]
fn verify_estimates_and_csv_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--suite", "estimates", "--p", "2", "--n", "16", "--out-dir", dir.path().to_str().unwrap()]);
    let doc = validated(&out, "verify");
    let names: Vec<&str> = doc["result"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"second_order_final") && names.contains(&"harnack"));
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.starts_with("name,p,lhs,rhs,fitted_constant,pass\n"));
    assert_eq!(csv.lines().count(), names.len() + 1);
}

#[test]
fn study_drift_tables() {
    // the local balls are only resolved from n = 32 on
    let out = run(&["study", "--p", "2", "--n", "32"]);
    let doc = validated(&out, "study");
    assert_eq!(doc["result"]["sizes"], serde_json::json!([32, 64, 128]));
    // every drift ratio is at least 1, so a limit of 1 must fail
    let out = run(&["study", "--p", "2", "--n", "16", "--limit", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("name,C_16,C_32,C_64,max_ratio,pass\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[solver]\ndampng = 0.5\n").unwrap();
    let out = run(&["solve", "--p", "3", "--domain", "circle:64", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dampng"));
    assert_eq!(run(&["solve", "--p", "3", "--domain", "sphere:2"]).status.code(), Some(3));
    assert_eq!(run(&["solve", "--domain", "circle:64"]).status.code(), Some(3));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let capped = dir.path().join("capped.toml");
    std::fs::write(&capped, "[solver]\nmax_outer = 2\nmax_halvings = 0\n").unwrap();
    let out = run(&["solve", "--p", "3", "--domain", "torus:2:16", "--config", capped.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
