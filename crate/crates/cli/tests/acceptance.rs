//! Acceptance criteria, one line each. Runs without the libtest harness so
//! that every criterion is reported even when an earlier one fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use dcpension::montecarlo::{analytic_moments, convexity_probe, simulate_moments, PROBE_OFFSETS};
use dcpension::verify::{
    ansatz_check, foc_check, halton_states, hjb_check, mc_consistency, ode_check, riccati_check, McSettings,
};
use dcpension::{estimate_objective, ModelParams, PolicySpec, SimConfig, State, ValueFunction};

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn baseline_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json")
}

fn vf_of(p: ModelParams) -> Result<ValueFunction, String> {
    let p = p.validate().map_err(|e| e.to_string())?;
    ValueFunction::new(p).map_err(|e| e.to_string())
}

fn baseline() -> Result<ValueFunction, String> {
    vf_of(ModelParams::from_json_file(baseline_path()).map_err(|e| e.to_string())?)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let vf = baseline()?;
    let r = ode_check(&vf, 101, 1e-6).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    Ok((r.pass && secs < 5.0, format!("max abs {:.2e} (< 1e-6), {secs:.2} s (< 5 s)", r.max_abs)))
}

fn riccati_cases() -> Outcome {
    let sets = [
        ("delta>0", 2.0, 0.3, -0.3, 0.04),
        ("delta=0", 0.5f64.sqrt(), 0.5, 0.0, 0.2),
        ("delta<0", 0.5, 0.5, 0.0, 0.3),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, kappa, sigma_v, rho, delta) in sets {
        let mut p = ModelParams::baseline();
        (p.kappa, p.sigma_v, p.rho_lv, p.delta) = (kappa, sigma_v, rho, delta);
        let vf = vf_of(p)?;
        let disc = vf.riccati().discriminant;
        let reports = riccati_check(&vf, 50, 1e-8).map_err(|e| e.to_string())?;
        let (oracle, residual) = (&reports[0], &reports[1]);
        let right_sign = match name {
            "delta>0" => disc > 1e-12,
            "delta=0" => disc.abs() < 1e-12,
            _ => disc < -1e-12,
        };
        pass &= right_sign && oracle.pass && residual.pass;
        parts.push(format!("{name}: disc {disc:.1e}, oracle {:.1e}, residual {:.1e}", oracle.max_abs, residual.max_abs));
    }
    Ok((pass, parts.join("; ")))
}

fn hjb_residual() -> Outcome {
    let vf = baseline()?;
    let states = halton_states(vf.params().horizon, 100);
    let r = hjb_check(&vf, &states, 1e-6, 1e-10).map_err(|e| e.to_string())?;
    Ok((
        r.iter().all(|r| r.pass),
        format!("residual {:.2e} (< 1e-6), quadratic identity {:.2e} (< 1e-10)", r[0].max_rel, r[1].max_rel),
    ))
}

fn first_order_condition() -> Outcome {
    let vf = baseline()?;
    let states = halton_states(vf.params().horizon, 100);
    let all = foc_check(&vf, &states, 1e-12, 1e-6).map_err(|e| e.to_string())?;
    let twenty = foc_check(&vf, &states[..20], 1e-12, 1e-6).map_err(|e| e.to_string())?;
    Ok((
        all[0].pass && twenty[1].pass,
        format!("analytic {:.2e} (< 1e-12), finite difference {:.2e} (< 1e-6)", all[0].max_rel, twenty[1].max_rel),
    ))
}

fn ansatz() -> Outcome {
    let vf = baseline()?;
    let r = ansatz_check(&vf, 10, 1e-6).map_err(|e| e.to_string())?;
    Ok((r.pass, format!("worst bracket {:.2e} (< 1e-6)", r.max_rel)))
}

fn monte_carlo() -> Outcome {
    let vf = baseline()?;
    let phi = vf.value(&State::initial(vf.params())).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let est = estimate_objective(&vf, &SimConfig::new(100_000, 42, PolicySpec::Optimal)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let z = (est.mean - phi) / est.std_error;
    Ok((
        z.abs() <= 3.0 && secs < 60.0,
        format!(
            "J_MC {:.6} ± {:.6}, phi {phi:.6}, z {z:.2} (|z| <= 3), rel {:.2}%, {secs:.1} s (< 60 s)",
            est.mean,
            est.std_error,
            100.0 * (est.mean - phi) / phi
        ),
    ))
}

fn optimality_probe() -> Outcome {
    let vf = baseline()?;
    let probe = convexity_probe(&vf, 20_000, 252, 42, &PROBE_OFFSETS, 2.0).map_err(|e| e.to_string())?;
    let worst = probe
        .steps
        .iter()
        .map(|s| s.mean_increase / s.std_error)
        .fold(f64::INFINITY, f64::min);
    let means: Vec<String> = probe.estimates.iter().map(|e| format!("{:.5}", e.mean)).collect();
    Ok((probe.pass, format!("J by offset [{}], smallest step {worst:.2} SE (>= -2)", means.join(", "))))
}

fn moments() -> Outcome {
    let p = ModelParams::from_json_file(baseline_path()).map_err(|e| e.to_string())?;
    let sims = simulate_moments(&p, 100_000, 252, 42, &[0.5, 1.0, 5.0]).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in &sims {
        let (s, l, v) = analytic_moments(&p, m.t);
        for (est, exact) in [(m.stock, s), (m.salary, l), (m.variance, v)] {
            worst = worst.max((est.mean - exact).abs() / est.std_error);
        }
    }
    Ok((worst < 3.0, format!("largest deviation {worst:.2} SE (< 3) over S, L, V at t = 0.5, 1, 5")))
}

fn degenerate_limits() -> Outcome {
    let mut p = ModelParams::baseline();
    p.zeta = 0.0;
    p.mu_s = p.m;
    p.sigma_pi = 0.0;
    p.mu_pi = 0.005;
    (p.lambda_pi, p.lambda_s, p.lambda_l, p.lambda_c, p.lambda_v) = (0.0, 0.0, 0.0, 0.0, 0.0);
    p.sigma_v = 0.0;
    p.xi = 0.0;
    let vf = vf_of(p)?;
    let phi = vf.value(&State::initial(&p)).map_err(|e| e.to_string())?;
    let est = estimate_objective(&vf, &SimConfig::new(1000, 42, PolicySpec::Optimal)).map_err(|e| e.to_string())?;
    let rel = (est.mean - phi).abs() / phi;
    let deterministic = est.std_error == 0.0 && rel < 1e-4;

    let mut q = ModelParams::baseline();
    q.xi = 0.0;
    let vf = vf_of(q)?;
    let mut zero = true;
    let mut salary_free = true;
    for t in [0.0, 1.0, 2.5, 4.0, 5.0] {
        let d = vf.decomposition(t, 0.1).map_err(|e| e.to_string())?;
        zero &= d.phi3 == 0.0 && d.phi5 == 0.0;
        let base = vf.value(&State::new(t, 1.0, 0.2, 0.04)).map_err(|e| e.to_string())?;
        for (l, v) in [(0.05, 0.005), (2.0, 0.5)] {
            salary_free &= vf.value(&State::new(t, 1.0, l, v)).map_err(|e| e.to_string())? == base;
        }
    }

    let reports = mc_consistency(
        &baseline()?,
        &McSettings {
            n_paths: 1,
            probe_paths: 0,
            ..McSettings::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let flat = reports.last().ok_or("no running-loss report")?;

    Ok((
        deterministic && zero && salary_free && flat.pass,
        format!(
            "zero noise: se {:.1e}, rel {rel:.1e} (< 1e-4); no contribution: phi3 = phi5 = 0 {zero}, salary-free {salary_free}; flat death loss: rel {:.1e}",
            est.std_error, flat.max_rel
        ),
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = baseline_path();
    let simulate = |name: &str| {
        let csv = dir.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_dcpension"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "42", "--paths", "1000", "--out"])
            .arg(&csv)
            .output()
            .map_err(|e| e.to_string())?;
        let bytes = std::fs::read(&csv).map_err(|e| e.to_string())?;
        Ok::<_, String>((out.status.success(), out.stdout, bytes))
    };
    let (ok_a, out_a, csv_a) = simulate("a.csv")?;
    let (ok_b, out_b, csv_b) = simulate("b.csv")?;
    let identical = ok_a && ok_b && out_a == out_b && csv_a == csv_b;

    let verify = Command::new(env!("CARGO_BIN_EXE_dcpension"))
        .args(["verify", "all", "--config", cfg.to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_slice(&verify.stdout).map_err(|e| e.to_string())?;
    let code = verify.status.code();
    Ok((
        identical && code == Some(0) && report["pass"] == true,
        format!("simulate byte-identical {identical} ({} CSV bytes); verify all exit {code:?}", csv_a.len()),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("riccati cases", riccati_cases),
        ("hjb residual", hjb_residual),
        ("first-order condition", first_order_condition),
        ("ansatz decomposition", ansatz),
        ("monte carlo vs value function", monte_carlo),
        ("optimality probe", optimality_probe),
        ("moment checks", moments),
        ("degenerate limits", degenerate_limits),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        failures += usize::from(!pass);
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
