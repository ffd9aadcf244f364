//! Independent numerical checks of the closed-form solution.
//!
//! Each check produces a [`ResidualReport`]. Relative residuals are always
//! normalised by the largest additive term of the expression being tested,
//! so a check cannot pass merely because every term is tiny.

pub mod ansatz;
pub mod hjb;
pub mod ode;

use serde::Serialize;

use crate::closedform::{ValueDecomposition, ValueFunction};
use crate::error::Result;
use crate::model::{ModelParams, State};
use crate::montecarlo::{
    convexity_probe, simulate_paths, Mode, PolicySpec, SimConfig, PROBE_OFFSETS,
};

pub use ansatz::{ansatz_residuals, Bracket};
pub use hjb::{foc_residual, hjb_residual, HjbPoint};
pub use ode::{dopri5, prefactor_oracle, riccati_oracle, scalar_oracle, OracleTable, ORACLE_TOL};

/// Time step of the finite-difference time derivatives, as a fraction of `T`.
pub const TIME_STEP: f64 = 1e-6;

/// `|Σ terms| / max |term|`, zero when every term is zero.
pub fn relative(terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        terms.iter().sum::<f64>().abs() / scale
    }
}

/// Time derivatives of the six coefficients at `(t, v)`: central difference
/// in the interior, one-sided three-point formulas within a step of `0` or `T`.
pub fn coefficient_rates(vf: &ValueFunction, t: f64, v: f64) -> Result<ValueDecomposition> {
    let horizon = vf.params().horizon;
    let h = TIME_STEP * horizon;
    let at = |s: f64| vf.decomposition(s, v).map(|d| to_array(&d));
    let rates = if t + h > horizon {
        let (f0, f1, f2) = (at(t)?, at(t - h)?, at(t - 2.0 * h)?);
        std::array::from_fn(|i| (3.0 * f0[i] - 4.0 * f1[i] + f2[i]) / (2.0 * h))
    } else if t - h < 0.0 {
        let (f0, f1, f2) = (at(t)?, at(t + h)?, at(t + 2.0 * h)?);
        std::array::from_fn(|i| (-3.0 * f0[i] + 4.0 * f1[i] - f2[i]) / (2.0 * h))
    } else {
        let (up, down) = (at(t + h)?, at(t - h)?);
        std::array::from_fn(|i| (up[i] - down[i]) / (2.0 * h))
    };
    Ok(from_array(rates))
}

fn to_array(d: &ValueDecomposition) -> [f64; 6] {
    [d.phi1, d.phi2, d.phi3, d.phi4, d.phi5, d.phi6]
}

fn from_array(a: [f64; 6]) -> ValueDecomposition {
    ValueDecomposition {
        phi1: a[0],
        phi2: a[1],
        phi3: a[2],
        phi4: a[3],
        phi5: a[4],
        phi6: a[5],
    }
}

/// Element `index` (from 1) of the van der Corput sequence in `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// `n` quasi-random states in `[0,T] × [0.1,5] × [0.05,2] × [0.005,0.5]`.
pub fn halton_states(horizon: f64, n: usize) -> Vec<State> {
    (1..=n as u64)
        .map(|i| {
            State::new(
                horizon * halton(i, 2),
                0.1 + 4.9 * halton(i, 3),
                0.05 + 1.95 * halton(i, 5),
                0.005 + 0.495 * halton(i, 7),
            )
        })
        .collect()
}

/// What a report's statistic measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Absolute,
    Relative,
    StandardErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub check: String,
    pub n_points: usize,
    pub max_abs: f64,
    pub max_rel: f64,
    /// Which of `max_abs` and `max_rel` is held to the tolerance.
    pub measure: Measure,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl ResidualReport {
    fn new(check: &str, n_points: usize, max_abs: f64, max_rel: f64, measure: Measure, tolerance: f64) -> Self {
        let statistic = match measure {
            Measure::Absolute => max_abs,
            _ => max_rel,
        };
        Self {
            check: check.into(),
            n_points,
            max_abs,
            max_rel,
            measure,
            tolerance,
            // NaN never passes
            pass: statistic <= tolerance,
            details: None,
        }
    }

    fn with_details(mut self, details: impl Serialize) -> Self {
        self.details = serde_json::to_value(details).ok();
        self
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let statistic = match self.measure {
            Measure::Absolute => self.max_abs,
            _ => self.max_rel,
        };
        format!(
            "{:<22} {:>4}  {:>6} points  {:?} {:.3e} (tolerance {:.1e})",
            self.check,
            if self.pass { "pass" } else { "FAIL" },
            self.n_points,
            self.measure,
            statistic,
            self.tolerance
        )
    }
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    // NaN propagates so that a broken evaluation fails the check
    values.fold(0.0, |m: f64, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
}

/// Closed-form `φ1, φ2, φ4, φ5, φ6` against the backward RK oracle on an
/// `n`-point uniform grid.
pub fn ode_check(vf: &ValueFunction, n: usize, tolerance: f64) -> Result<ResidualReport> {
    let p = vf.params();
    let grid: Vec<f64> = (0..n).map(|i| p.horizon * i as f64 / (n - 1).max(1) as f64).collect();
    let oracle = scalar_oracle(p, &grid, ORACLE_TOL)?;
    let mut worst = [0.0_f64; 5];
    let mut worst_rel = 0.0_f64;
    for (i, &t) in grid.iter().enumerate() {
        let s = vf.scalars(t)?;
        let pairs = [
            (s.phi1, oracle.phi1[i]),
            (s.phi2, oracle.phi2[i]),
            (s.phi4, oracle.phi4[i]),
            (s.phi5, oracle.phi5[i]),
            (s.phi6, oracle.phi6[i]),
        ];
        for (k, (c, o)) in pairs.iter().enumerate() {
            let e = (c - o).abs();
            worst[k] = max_of([worst[k], e].into_iter());
            if o.abs() > 0.0 {
                worst_rel = max_of([worst_rel, e / o.abs()].into_iter());
            }
        }
    }
    #[derive(Serialize)]
    struct PerCoefficient {
        phi1: f64,
        phi2: f64,
        phi4: f64,
        phi5: f64,
        phi6: f64,
    }
    let max_abs = max_of(worst.iter().copied());
    Ok(
        ResidualReport::new("ode", grid.len(), max_abs, worst_rel, Measure::Absolute, tolerance).with_details(
            PerCoefficient {
                phi1: worst[0],
                phi2: worst[1],
                phi4: worst[2],
                phi5: worst[3],
                phi6: worst[4],
            },
        ),
    )
}

/// Riccati exponent against the RK oracle over the last year (or the whole
/// horizon if shorter) at `n` points, together with the ODE residual of the
/// closed form and the prefactor half a year before mid-horizon.
pub fn riccati_check(vf: &ValueFunction, n: usize, tolerance: f64) -> Result<Vec<ResidualReport>> {
    let p = vf.params();
    let r = vf.riccati();
    let tau = p.horizon;
    let window = p.horizon.min(1.0).min(0.999 * r.explosion);
    let ts: Vec<f64> = (0..n).map(|i| tau - window * i as f64 / (n - 1).max(1) as f64).collect();
    let oracle = riccati_oracle(p.kappa, p.sigma_v, p.rho_lv, tau, &ts, ORACLE_TOL)?;
    let mut max_abs = 0.0_f64;
    let mut max_residual = 0.0_f64;
    let h = 1e-6;
    for (t, o) in ts.iter().zip(&oracle) {
        let y = vf.tilde_phi32(*t, tau)?;
        max_abs = max_of([max_abs, (y - o).abs()].into_iter());
        let span = tau - t;
        if span > h {
            let slope = (r.backward(span + h)? - r.backward(span - h)?) / (2.0 * h);
            max_residual = max_of([max_residual, (slope - r.rhs(y)).abs()].into_iter());
        }
    }
    let exponent = ResidualReport::new("riccati", ts.len(), max_abs, max_abs, Measure::Absolute, tolerance);
    let residual = ResidualReport::new(
        "riccati_ode_residual",
        ts.len(),
        max_residual,
        max_residual,
        Measure::Absolute,
        tolerance,
    );

    // the source vanishes at T, so test mid-horizon
    let mid = 0.5 * tau;
    let t = (mid - 0.5).max(0.0);
    let closed = vf.tilde_phi31(t, mid)?;
    let reference = prefactor_oracle(p, t, mid, vf.f3(mid), ORACLE_TOL)?;
    let err = (closed - reference).abs();
    let rel = if reference == 0.0 { err } else { err / reference.abs() };
    let prefactor = ResidualReport::new("prefactor", 1, err, rel, Measure::Relative, tolerance);
    Ok(vec![exponent, residual, prefactor])
}

/// `Ψ(π*)` and the exact quadratic identity at quasi-random states.
pub fn hjb_check(vf: &ValueFunction, states: &[State], tolerance: f64, identity_tolerance: f64) -> Result<Vec<ResidualReport>> {
    let mut max_abs = 0.0_f64;
    let mut max_rel = 0.0_f64;
    let mut id_abs = 0.0_f64;
    let mut id_rel = 0.0_f64;
    for s in states {
        let h = HjbPoint::new(vf, s)?;
        let pi = h.optimal_weight();
        let psi = h.psi(pi);
        max_abs = max_of([max_abs, psi.abs()].into_iter());
        max_rel = max_of([max_rel, h.relative_residual(pi)].into_iter());
        for d in [0.1, 1.0] {
            let lhs = h.psi(pi + d) - psi;
            let rhs = h.curvature() * d * d;
            let e = (lhs - rhs).abs();
            id_abs = max_of([id_abs, e].into_iter());
            id_rel = max_of([id_rel, e / rhs.abs()].into_iter());
        }
    }
    Ok(vec![
        ResidualReport::new("hjb", states.len(), max_abs, max_rel, Measure::Relative, tolerance),
        ResidualReport::new(
            "hjb_quadratic",
            2 * states.len(),
            id_abs,
            id_rel,
            Measure::Relative,
            identity_tolerance,
        ),
    ])
}

/// Analytic `dΨ/dπ` at `π*`, and a finite-difference cross-check at `π*`
/// and `π* ± 1`.
pub fn foc_check(vf: &ValueFunction, states: &[State], tolerance: f64, fd_tolerance: f64) -> Result<Vec<ResidualReport>> {
    let mut abs = 0.0_f64;
    let mut rel = 0.0_f64;
    let mut fd_abs = 0.0_f64;
    let mut fd_rel = 0.0_f64;
    let step = 1e-6;
    for s in states {
        let h = HjbPoint::new(vf, s)?;
        let pi = h.optimal_weight();
        abs = max_of([abs, h.dpsi(pi).abs()].into_iter());
        rel = max_of([rel, h.relative_foc(pi)].into_iter());
        let scale = h.slope_at_zero().abs().max(2.0 * h.curvature().abs());
        for q in [pi - 1.0, pi, pi + 1.0] {
            let fd = (h.psi(q + step) - h.psi(q - step)) / (2.0 * step);
            let e = (fd - h.dpsi(q)).abs();
            fd_abs = max_of([fd_abs, e].into_iter());
            fd_rel = max_of([fd_rel, e / scale].into_iter());
        }
    }
    Ok(vec![
        ResidualReport::new("foc", states.len(), abs, rel, Measure::Relative, tolerance),
        ResidualReport::new(
            "foc_difference",
            3 * states.len(),
            fd_abs,
            fd_rel,
            Measure::Relative,
            fd_tolerance,
        ),
    ])
}

/// The six brackets on an `n × n` grid, `t_i = i T / n` and `V` uniform on
/// `[0.005, 0.5]`.
pub fn ansatz_check(vf: &ValueFunction, n: usize, tolerance: f64) -> Result<ResidualReport> {
    let horizon = vf.params().horizon;
    let mut max_abs = 0.0_f64;
    let mut max_rel = 0.0_f64;
    let mut worst = [0.0_f64; 6];
    for i in 0..n {
        let t = horizon * i as f64 / n as f64;
        for j in 0..n {
            let v = 0.005 + 0.495 * j as f64 / (n - 1).max(1) as f64;
            for (k, b) in ansatz_residuals(vf, t, v)?.iter().enumerate() {
                max_abs = max_of([max_abs, b.residual.abs()].into_iter());
                max_rel = max_of([max_rel, b.relative].into_iter());
                worst[k] = max_of([worst[k], b.relative].into_iter());
            }
        }
    }
    let details: serde_json::Map<String, serde_json::Value> = ansatz::BRACKET_NAMES
        .iter()
        .zip(worst)
        .map(|(name, w)| (name.to_string(), w.into()))
        .collect();
    Ok(ResidualReport::new("ansatz", n * n, max_abs, max_rel, Measure::Relative, tolerance).with_details(details))
}

/// Settings of the simulation checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSettings {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    /// Paths per offset of the convexity probe; zero skips the probe.
    pub probe_paths: usize,
    /// Allowed distance from the value function, in standard errors.
    pub max_z: f64,
    /// Relative tolerance used instead when the standard error is zero.
    pub deterministic_tol: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            steps_per_year: 252,
            seed: 42,
            probe_paths: 20_000,
            max_z: 3.0,
            deterministic_tol: 1e-4,
        }
    }
}

/// Monte Carlo estimate under the optimal policy against the value
/// function at the initial state, the convexity probe, and the constant
/// running loss of a model with negligible death-loss slope.
pub fn mc_consistency(vf: &ValueFunction, settings: &McSettings) -> Result<Vec<ResidualReport>> {
    let p = vf.params();
    let phi = vf.value(&State::initial(p))?;
    let config = SimConfig {
        n_paths: settings.n_paths,
        steps_per_year: settings.steps_per_year,
        seed: settings.seed,
        policy: PolicySpec::Optimal,
        mode: Mode::Written,
    };
    let estimate = simulate_paths(vf, &config)?.estimate()?;
    let gap = (estimate.mean - phi).abs();
    #[derive(Serialize)]
    struct McDetails {
        value_function: f64,
        estimate: crate::montecarlo::ObjectiveEstimate,
    }
    let details = McDetails {
        value_function: phi,
        estimate,
    };
    let mut reports = vec![if estimate.std_error > 0.0 {
        ResidualReport::new(
            "mc",
            estimate.n_paths,
            gap,
            gap / estimate.std_error,
            Measure::StandardErrors,
            settings.max_z,
        )
    } else {
        ResidualReport::new(
            "mc",
            estimate.n_paths,
            gap,
            gap / phi.abs(),
            Measure::Relative,
            settings.deterministic_tol,
        )
    }
    .with_details(details)];

    if settings.probe_paths > 0 {
        let probe = convexity_probe(
            vf,
            settings.probe_paths,
            settings.steps_per_year,
            settings.seed,
            &PROBE_OFFSETS,
            2.0,
        )?;
        let worst = max_of(
            probe
                .steps
                .iter()
                .map(|s| if s.std_error > 0.0 { -s.mean_increase / s.std_error } else { 0.0 }),
        );
        let worst_abs = max_of(probe.steps.iter().map(|s| (-s.mean_increase).max(0.0)));
        let mut report =
            ResidualReport::new("convexity", probe.steps.len(), worst_abs, worst, Measure::StandardErrors, 2.0);
        report.pass = probe.pass;
        reports.push(report.with_details(probe));
    }

    reports.push(constant_running_loss_check(p, settings)?);
    Ok(reports)
}

/// With a death-loss slope far below rounding, every path's running loss
/// must equal `α2² (1 − e^{−λT})`.
fn constant_running_loss_check(p: &ModelParams, settings: &McSettings) -> Result<ResidualReport> {
    let mut flat = *p;
    flat.beta2 = -1e-300;
    let vf = ValueFunction::new(flat.validate()?)?;
    let config = SimConfig {
        n_paths: 256,
        steps_per_year: settings.steps_per_year,
        seed: settings.seed,
        policy: PolicySpec::Optimal,
        mode: Mode::Written,
    };
    let expected = p.alpha2 * p.alpha2 * -(-p.lambda_mort * p.horizon).exp_m1();
    let sim = simulate_paths(&vf, &config)?;
    let errors: Vec<f64> = sim.completed().map(|o| (o.running_loss - expected).abs()).collect();
    let max_abs = max_of(errors.iter().copied());
    let max_rel = if expected == 0.0 { max_abs } else { max_abs / expected };
    Ok(ResidualReport::new(
        "running_loss_constant",
        errors.len(),
        max_abs,
        max_rel,
        Measure::Relative,
        1e-12,
    ))
}

/// Which checks to run and at what tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub ode_points: usize,
    pub riccati_points: usize,
    pub hjb_states: usize,
    pub foc_states: usize,
    pub ansatz_grid: usize,
    /// Overrides the tolerance of every deterministic check when set.
    pub tolerance: Option<f64>,
    pub mc: McSettings,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            ode_points: 101,
            riccati_points: 50,
            hjb_states: 100,
            foc_states: 20,
            ansatz_grid: 10,
            tolerance: None,
            mc: McSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckGroup {
    Ode,
    Hjb,
    Foc,
    Ansatz,
    Mc,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 5] = [Self::Ode, Self::Hjb, Self::Foc, Self::Ansatz, Self::Mc];
}

/// Runs the requested groups and returns their reports in a fixed order.
pub fn run_checks(vf: &ValueFunction, groups: &[CheckGroup], opts: &VerifyOptions) -> Result<Vec<ResidualReport>> {
    let tol = |default: f64| opts.tolerance.unwrap_or(default);
    let horizon = vf.params().horizon;
    let mut reports = Vec::new();
    for group in CheckGroup::ALL {
        if !groups.contains(&group) {
            continue;
        }
        match group {
            CheckGroup::Ode => {
                reports.push(ode_check(vf, opts.ode_points, tol(1e-6))?);
                reports.extend(riccati_check(vf, opts.riccati_points, tol(1e-8))?);
            }
            CheckGroup::Hjb => {
                let states = halton_states(horizon, opts.hjb_states);
                reports.extend(hjb_check(vf, &states, tol(1e-6), tol(1e-10))?);
            }
            CheckGroup::Foc => {
                let states = halton_states(horizon, opts.foc_states);
                reports.extend(foc_check(vf, &states, tol(1e-12), tol(1e-6))?);
            }
            CheckGroup::Ansatz => reports.push(ansatz_check(vf, opts.ansatz_grid, tol(1e-6))?),
            CheckGroup::Mc => reports.extend(mc_consistency(vf, &opts.mc)?),
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_prefix() {
        let v: Vec<f64> = (1..=4).map(|i| halton(i, 2)).collect();
        assert_eq!(v, [0.5, 0.25, 0.75, 0.125]);
        assert_eq!(halton(1, 3), 1.0 / 3.0);
    }

    #[test]
    fn relative_handles_all_zero() {
        assert_eq!(relative(&[0.0, 0.0]), 0.0);
        assert_eq!(relative(&[1.0, -1.0, 0.5]), 0.5);
    }

    #[test]
    fn nan_fails_a_report() {
        let r = ResidualReport::new("x", 1, f64::NAN, f64::NAN, Measure::Relative, 1.0);
        assert!(!r.pass);
        assert!(max_of([0.1, f64::NAN, 0.2].into_iter()).is_nan());
    }
}
