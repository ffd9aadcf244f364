use approx::assert_relative_eq;
use dcpension::model::{derive_a, derive_varpi, real_inflation_jump};
use dcpension::{Error, ModelParams};

// Exact rationals obtained by substituting the quadratic ansatz and the
// optimal weight into the HJB operator symbolically, baseline parameters.
const A1: f64 = -23883193.0 / 87500000.0;
const A2: f64 = -1481.0 / 5000.0;
const A3: f64 = 274901.0 / 12500000.0;
const A4: f64 = 3.0 / 5000.0;
const A5: f64 = -4160099.0 / 12500000.0;

fn config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json")
}

#[test]
fn shipped_config_is_the_baseline() {
    let p = ModelParams::from_json_file(config_path()).unwrap();
    assert_eq!(p, ModelParams::baseline());
    p.validate().unwrap();
}

#[test]
fn json_round_trip_is_exact() {
    let p = ModelParams::baseline();
    let back = ModelParams::from_json_str(&p.to_json_pretty()).unwrap();
    assert_eq!(p, back);
}

#[test]
fn unknown_key_is_rejected() {
    let text = std::fs::read_to_string(config_path()).unwrap().replacen("\"kappa\"", "\"kapa\"", 1);
    assert!(matches!(ModelParams::from_json_str(&text), Err(Error::Json(_))));
}

#[test]
fn baseline_varpi() {
    let w = derive_varpi(&ModelParams::baseline());
    assert_relative_eq!(w.varpi1, 0.126, max_relative = 1e-14);
    assert_relative_eq!(w.varpi2, 0.021, max_relative = 1e-14);
    assert_relative_eq!(w.varpi3, -0.009, max_relative = 1e-14);
    assert_relative_eq!(w.varpi4, 0.0525, max_relative = 1e-14);
}

#[test]
fn baseline_growth_rates_match_symbolic_substitution() {
    let p = ModelParams::baseline();
    let a = derive_a(&p, &derive_varpi(&p));
    assert_relative_eq!(a.a1, A1, max_relative = 1e-13);
    assert_relative_eq!(a.a2, A2, max_relative = 1e-13);
    assert_relative_eq!(a.a3, A3, max_relative = 1e-12);
    assert_relative_eq!(a.a4, A4, max_relative = 1e-11);
    assert_relative_eq!(a.a5, A5, max_relative = 1e-13);
}

#[test]
fn inflation_jump_factor() {
    let p = ModelParams::baseline();
    assert_relative_eq!(real_inflation_jump(&p), 0.0004 - 0.02, max_relative = 1e-14);
}

#[test]
fn validation_reports_every_violation() {
    let mut p = ModelParams::baseline();
    p.kappa = -1.0;
    p.beta1 = 1.0;
    p.xi = 2.0;
    let err = p.validate().unwrap_err();
    assert!(err.mentions("kappa > 0"));
    assert!(err.mentions("beta1 < 0"));
    assert!(err.mentions("xi in [0, 1]"));
}

#[test]
fn feller_violation_is_rejected() {
    let mut p = ModelParams::baseline();
    p.sigma_v = 0.5;
    assert!(p.validate().unwrap_err().mentions("2 kappa delta > sigma_V^2"));
}

#[test]
fn inflation_jump_below_minus_one_is_rejected() {
    let mut p = ModelParams::baseline();
    p.eta_pi = -1.5;
    assert!(p.validate().unwrap_err().mentions("eta_Pi > -1"));
}

#[test]
fn market_without_stock_risk_is_rejected() {
    let mut p = ModelParams::baseline();
    p.zeta = 0.0;
    p.sigma_ss = 0.0;
    p.lambda_s = 0.0;
    assert!(p.validate().unwrap_err().mentions("varpi4 > 0"));
}

#[test]
fn noiseless_market_reduces_varpi() {
    let mut p = ModelParams::baseline();
    p.zeta = 0.0;
    p.sigma_pi = 0.0;
    p.lambda_s = 0.0;
    let w = derive_varpi(&p);
    assert_relative_eq!(w.varpi1, p.mu_s - p.m, max_relative = 1e-15);
    assert_relative_eq!(w.varpi2, p.sigma_ss * p.sigma_ls, max_relative = 1e-15);
    assert_eq!(w.varpi3, 0.0);
    assert_relative_eq!(w.varpi4, p.sigma_ss * p.sigma_ss, max_relative = 1e-15);
}
