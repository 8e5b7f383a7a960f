use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_periodic-fpe");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn run_env(dir: &Path, args: &[&str], key: &str, value: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .env(key, value)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn identity_chain_has_period_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("i.csv"), "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    std::fs::write(d.join("x.csv"), "0.2\n0.3\n0.5\n").unwrap();
    let out = run(d, &["markov-check", "--matrix", "i.csv", "--init", "x.csv", "--out", "res"]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(&d.join("res"));
    assert_eq!(m["headline"]["period"], 1);
    assert_eq!(m["headline"]["strong_period"], 1);
    assert!(m["version"].as_str().unwrap().starts_with('v'));
}

#[test]
fn heat_eigen_headline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("heat.json"),
        r#"{"domain": {"lower": 0, "upper": 1}, "n": 100, "period_T": 0.1, "diffusion": "1"}"#,
    )
    .unwrap();
    let out = run(d, &["eigen", "--config", "heat.json", "--bc", "dirichlet", "--out", "eig/spectral.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&d.join("eig"));
    let r = m["headline"]["r"].as_f64().unwrap();
    let exact = (-std::f64::consts::PI.powi(2) * 0.1).exp();
    assert!((r - exact).abs() / exact < 0.01, "{r} vs {exact}");
    let spectral: Value = serde_json::from_slice(&std::fs::read(d.join("eig/spectral.json")).unwrap()).unwrap();
    for key in ["r", "mu", "lambda1", "residual", "iterations"] {
        assert!(!spectral[key].is_null(), "missing {key}");
    }
    let csv = std::fs::read_to_string(d.join("eig/spectral_eigvec.csv")).unwrap();
    assert_eq!(csv.lines().count(), 101);
    let listed: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["path"].as_str().unwrap())
        .collect();
    assert!(listed.contains(&"spectral.json") && listed.contains(&"spectral_eigvec.csv"));
}

#[test]
fn defaults_are_recorded_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("fp.json"), r#"{"domain": {"lower": 0, "upper": 1}, "sigma": "1"}"#).unwrap();
    let out = run(d, &["fp-solve", "--config", "fp.json", "--out", "o/density.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&d.join("o"));
    let defaults: Vec<&str> = m["defaults"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for key in ["/n", "/dt", "/tol"] {
        assert!(defaults.contains(&key), "{key} not in {defaults:?}");
    }
    assert_eq!(m["config"]["n"], 200);
    assert_eq!(m["config"]["dt"].as_f64(), Some(1.0 / 256.0));
    assert_eq!(m["config"]["tol"].as_f64(), Some(1e-9));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("fp.json"), r#"{"domain": {"lower": 0, "upper": 1}, "sgima": "1"}"#).unwrap();
    let out = run(d, &["--json-errors", "eigen", "--config", "fp.json", "--out", "o.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("sgima"));
}

#[test]
fn bad_nested_value_reports_its_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("fp.json"), r#"{"domain": {"lower": 0, "upper": "one"}, "sigma": "1"}"#).unwrap();
    let out = run(d, &["--json-errors", "stationary", "--config", "fp.json", "--out", "q.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["path"], "/domain/upper");
}

#[test]
fn reversed_box_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sde.json"),
        r#"{"domain": {"lower": [1], "upper": [0]}, "drift": ["0"], "sigma": [["1"]], "init": {"point": [0.5]}}"#,
    )
    .unwrap();
    let out = run(d, &["simulate-sde", "--config", "sde.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("o").exists());
}

#[test]
fn domain_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // columns do not sum to one
    std::fs::write(d.join("m.csv"), "0.5,0.5\n0.2,0.8\n").unwrap();
    std::fs::write(d.join("x.csv"), "0.5,0.5\n").unwrap();
    let out = run(d, &["markov-check", "--matrix", "m.csv", "--init", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "markov");
    assert_eq!(err["exit_code"], 1);

    // vanishing diffusion on a config that asks for an elliptic operator
    std::fs::write(d.join("fp.json"), r#"{"domain": {"lower": 0, "upper": 1}, "diffusion": "x - 0.5"}"#).unwrap();
    let out = run(d, &["fp-solve", "--config", "fp.json", "--out", "o/p.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "fpe");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["eigen", "--config"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let bad = run_env(dir.path(), &["selftest"], "PERIODIC_FPE_THREADS", "zero");
    assert_eq!(bad.status.code(), Some(2));
    let ok = run_env(dir.path(), &["selftest"], "PERIODIC_FPE_THREADS", "2");
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn sde_csv_initial_law_and_thread_count_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("cfg")).unwrap();
    std::fs::write(d.join("cfg/start.csv"), "x1,weight\n0.25,0.5\n0.75,0.5\n").unwrap();
    std::fs::write(
        d.join("cfg/run.json"),
        r#"{"domain": {"lower": [0], "upper": [1]}, "paths": 300, "periods": 3, "seed": 5,
            "drift": ["cos(2*pi*t)"], "sigma": [["0.7"]], "init": {"csv": "start.csv"}}"#,
    )
    .unwrap();
    let one = run_env(d, &["simulate-sde", "--config", "cfg/run.json", "--out", "a"], "PERIODIC_FPE_THREADS", "1");
    let four = run_env(d, &["simulate-sde", "--config", "cfg/run.json", "--out", "b"], "PERIODIC_FPE_THREADS", "4");
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(four.status.code(), Some(0));
    for n in 0..=3 {
        let name = format!("snapshot_{n:04}.csv");
        assert_eq!(
            std::fs::read(d.join("a").join(&name)).unwrap(),
            std::fs::read(d.join("b").join(&name)).unwrap()
        );
    }
    let first = std::fs::read_to_string(d.join("a/snapshot_0000.csv")).unwrap();
    assert!(first.lines().skip(1).all(|l| l.starts_with("0.25,") || l.starts_with("0.75,")));
}

#[test]
fn semilinear_writes_profiles_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sl.json"),
        r#"{"domain": {"lower": 0, "upper": 1}, "n": 30, "diffusion": "1", "bc": "dirichlet",
            "source_f": "u*(30 - u)", "dt": 0.015625, "snapshots": 4}"#,
    )
    .unwrap();
    let out = run(d, &["semilinear", "--config", "sl.json", "--out", "sol"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace: Value = serde_json::from_slice(&std::fs::read(d.join("sol/trace.json")).unwrap()).unwrap();
    assert!(trace["gap"].as_f64().unwrap() <= 1e-9);
    assert_eq!(trace["slack"].as_array().unwrap().len(), 2);
    assert!(!trace["trace"].as_array().unwrap().is_empty());
    for k in 0..4 {
        assert!(d.join(format!("sol/profile_{k:03}.csv")).exists());
    }
    // Dirichlet logistic: the solution is positive inside and below the carrying capacity
    let m = manifest(&d.join("sol"));
    let max_u = m["headline"]["max_u"].as_f64().unwrap();
    assert!(max_u > 0.1 && max_u < 30.0, "{max_u}");
}
