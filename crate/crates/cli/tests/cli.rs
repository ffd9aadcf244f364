use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn baseline() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcpension")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn validate_accepts_baseline() {
    assert_eq!(code(&run(&["validate", "--config", baseline().to_str().unwrap()])), 0);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(baseline()).unwrap().replace("\"kappa\": 2.0", "\"kappa\": -2.0");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa > 0"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["coeffs", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["value", "--config", baseline().to_str().unwrap()])), 1);
    let cfg = baseline();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["simulate", "--config", cfg, "--paths", "0"])), 1);
    assert_eq!(code(&run(&["simulate", "--config", cfg, "--policy", "greedy"])), 1);
    assert_eq!(code(&run(&["policy", "--config", cfg, "--t", "0", "--grid-x", "1:2", "--l", "0.2", "--v", "0.04"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn coeffs_prints_both_vectors() {
    let out = run(&["coeffs", "--config", baseline().to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((json["varpi"]["varpi4"].as_f64().unwrap() - 0.0525).abs() < 1e-15);
    assert!(json["a"]["a1"].as_f64().unwrap() < 0.0);
}

#[test]
fn value_reports_components() {
    let cfg = baseline();
    let out = run(&["value", "--config", cfg.to_str().unwrap(), "--t", "0", "--x", "1", "--l", "0.2", "--v", "0.04"]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let value = json["value"].as_f64().unwrap();
    assert!((value - 0.10297686064751366).abs() < 1e-12, "{value}");
    let bad = run(&["value", "--config", cfg.to_str().unwrap(), "--t", "9", "--x", "1", "--l", "0.2", "--v", "0.04"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn policy_grid_is_inclusive_with_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("policy.csv");
    let out = run(&[
        "policy", "--config", baseline().to_str().unwrap(), "--t", "0", "--grid-x", "-1:1:5", "--l", "0.2",
        "--v", "0.04", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x_bar,weight,amount");
    assert_eq!(lines.len(), 6);
    let xs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    // the weight is undefined at zero wealth while the amount is not
    let zero: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(zero[1], "NaN");
    assert!(zero[2].parse::<f64>().unwrap().is_finite());
    let amount = lines[5].split(',').nth(2).unwrap();
    assert!(amount.contains('e') && amount.split('e').next().unwrap().len() >= 18, "{amount}");
}

#[test]
fn manifest_lists_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("paths.csv");
    let manifest = dir.path().join("manifest.json");
    let out = run(&[
        "simulate", "--config", baseline().to_str().unwrap(), "--paths", "50", "--steps-per-year", "12",
        "--out", csv.to_str().unwrap(), "--manifest", manifest.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["seed"], 42);
    assert_eq!(m["outputs"][0].as_str().unwrap(), csv.to_str().unwrap());
    let est: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(est["estimate"]["n_paths"], 50);
}

#[test]
fn verify_exit_codes() {
    let cfg = baseline();
    let cfg = cfg.to_str().unwrap();
    let ok = run(&["verify", "ode", "--config", cfg]);
    assert_eq!(code(&ok), 0);
    let json: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(json["pass"], true);
    assert_eq!(code(&run(&["verify", "foc", "--config", cfg, "--tol", "1e-30"])), 3);
}
