//! Monte Carlo simulation of the real wealth, real salary and variance
//! system, and estimation of the objective `J`.
//!
//! Every path owns a ChaCha8 stream selected by its index, so estimates are
//! bit-identical for a fixed `(seed, n_paths, steps_per_year)` no matter how
//! rayon schedules the work.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::closedform::{PolicyCoefficients, ValueFunction};
use crate::error::{Error, Result};
use crate::model::{real_inflation_jump, ModelParams, State};

/// Largest tolerated fraction of aborted paths.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PolicySpec {
    /// The closed-form feedback control, applied in amount form.
    Optimal,
    /// A fixed stock weight.
    ConstantWeight(f64),
    /// The optimal weight shifted by a constant offset.
    PerturbedOptimal(f64),
}

impl PolicySpec {
    /// Parses `optimal`, `constant:<w>` or `perturbed:<d>`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::SimConfig(format!("unrecognised policy {s:?}"));
        let number = |v: &str| -> Result<f64> {
            let x: f64 = v.parse().map_err(|_| bad())?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(bad())
            }
        };
        match s.split_once(':') {
            None if s == "optimal" => Ok(Self::Optimal),
            Some(("constant", w)) => Ok(Self::ConstantWeight(number(w)?)),
            Some(("perturbed", d)) => Ok(Self::PerturbedOptimal(number(d)?)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Integrate the real quantities directly with the printed dynamics.
    Written,
    /// Simulate nominal wealth, salary and price index, then divide.
    ExactQuotient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub policy: PolicySpec,
    pub mode: Mode,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64, policy: PolicySpec) -> Self {
        Self {
            n_paths,
            steps_per_year: 252,
            seed,
            policy,
            mode: Mode::Written,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::SimConfig("n_paths must be at least 1".into()));
        }
        if self.steps_per_year == 0 {
            return Err(Error::SimConfig("steps_per_year must be at least 1".into()));
        }
        match self.policy {
            PolicySpec::ConstantWeight(x) | PolicySpec::PerturbedOptimal(x) if !x.is_finite() => {
                Err(Error::SimConfig("policy parameter must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Number of Euler steps on `[0, T]`, at least one.
    pub fn n_steps(&self, horizon: f64) -> usize {
        ((horizon * self.steps_per_year as f64).round() as usize).max(1)
    }
}

/// Gaussian increments and Poisson counts for one Euler step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepIncrements {
    pub dw_r: f64,
    pub dw_s: f64,
    pub dw_l: f64,
    pub dw_v: f64,
    pub dw_pi: f64,
    pub dn_s: f64,
    pub dn_l: f64,
    pub dn_c: f64,
    pub dn_v: f64,
    pub dn_pi: f64,
}

/// Per-step sampler with the Poisson laws and Cholesky factors precomputed.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    sqrt_dt: f64,
    rho_pi_r: f64,
    rho_pi_r_c: f64,
    rho_lv: f64,
    rho_lv_c: f64,
    poisson: [Option<Poisson<f64>>; 5],
}

impl IncrementSampler {
    pub fn new(p: &ModelParams, dt: f64) -> Self {
        let law = |lambda: f64| {
            let mean = lambda * dt;
            (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite Poisson mean"))
        };
        Self {
            sqrt_dt: dt.sqrt(),
            rho_pi_r: p.rho_pi_r,
            rho_pi_r_c: (1.0 - p.rho_pi_r * p.rho_pi_r).sqrt(),
            rho_lv: p.rho_lv,
            rho_lv_c: (1.0 - p.rho_lv * p.rho_lv).sqrt(),
            poisson: [
                law(p.lambda_s),
                law(p.lambda_l),
                law(p.lambda_c),
                law(p.lambda_v),
                law(p.lambda_pi),
            ],
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> StepIncrements {
        let mut z = [0.0; 5];
        for zi in &mut z {
            *zi = rng.sample(StandardNormal);
        }
        let mut n = [0.0; 5];
        for (ni, law) in n.iter_mut().zip(&self.poisson) {
            if let Some(law) = law {
                *ni = law.sample(rng);
            }
        }
        let h = self.sqrt_dt;
        StepIncrements {
            dw_r: h * z[0],
            dw_pi: h * (self.rho_pi_r * z[0] + self.rho_pi_r_c * z[4]),
            dw_s: h * z[1],
            dw_l: h * z[2],
            dw_v: h * (self.rho_lv * z[2] + self.rho_lv_c * z[3]),
            dn_s: n[0],
            dn_l: n[1],
            dn_c: n[2],
            dn_v: n[3],
            dn_pi: n[4],
        }
    }
}

/// Draws one step of increments; see [`IncrementSampler`] for repeated use.
pub fn draw_increments<R: Rng + ?Sized>(rng: &mut R, p: &ModelParams, dt: f64) -> StepIncrements {
    IncrementSampler::new(p, dt).draw(rng)
}

fn variance_step(p: &ModelParams, v: f64, inc: &StepIncrements, dt: f64) -> f64 {
    let vp = v.max(0.0);
    let next = v
        + p.kappa * (p.delta - vp) * dt
        + p.sigma_v * vp.sqrt() * inc.dw_v
        + p.eta_vv * inc.dn_v
        + p.eta_vc * inc.dn_c;
    next.max(0.0)
}

/// One Euler step of the real system with stock amount `amount` held over
/// the step. Time advances by `dt`.
pub fn step_state(p: &ModelParams, s: &State, inc: &StepIncrements, amount: f64, dt: f64) -> State {
    let jump = real_inflation_jump(p);
    let vp = s.v.max(0.0);
    let l = s.l_bar;
    let x = s.x_bar;
    let growth = p.m + 0.5 * p.zeta * p.zeta;
    let cross = p.zeta * p.sigma_pi * p.rho_pi_r;

    let l_next = l
        + l * (p.mu_l - p.mu_pi + p.sigma_pi * p.sigma_pi) * dt
        + l * p.sigma_ls * inc.dw_s
        + l * vp.sqrt() * inc.dw_l
        - l * p.sigma_pi * inc.dw_pi
        + l * p.eta_ll * inc.dn_l
        + l * p.eta_lc * inc.dn_c
        + l * jump * inc.dn_pi;

    let x_next = x
        + (x * (growth - p.mu_pi + p.sigma_pi * p.sigma_pi - cross) + amount * (p.mu_s - growth + cross)) * dt
        + p.xi * l * dt
        + (x - amount) * p.zeta * inc.dw_r
        + amount * p.sigma_ss * inc.dw_s
        - x * p.sigma_pi * inc.dw_pi
        + amount * p.eta_s * inc.dn_s
        + x * jump * inc.dn_pi;

    State {
        t: s.t + dt,
        x_bar: x_next,
        l_bar: l_next,
        v: variance_step(p, s.v, inc, dt),
    }
}

/// Nominal wealth, salary, price index and variance.
#[derive(Debug, Clone, Copy)]
struct Nominal {
    x: f64,
    l: f64,
    pi: f64,
    v: f64,
}

fn step_nominal(p: &ModelParams, s: &Nominal, inc: &StepIncrements, amount: f64, dt: f64) -> Nominal {
    let vp = s.v.max(0.0);
    let growth = p.m + 0.5 * p.zeta * p.zeta;
    Nominal {
        x: s.x
            + (s.x * growth + amount * (p.mu_s - growth)) * dt
            + p.xi * s.l * dt
            + (s.x - amount) * p.zeta * inc.dw_r
            + amount * p.sigma_ss * inc.dw_s
            + amount * p.eta_s * inc.dn_s,
        l: s.l
            * (1.0
                + p.mu_l * dt
                + p.sigma_ls * inc.dw_s
                + vp.sqrt() * inc.dw_l
                + p.eta_ll * inc.dn_l
                + p.eta_lc * inc.dn_c),
        pi: s.pi * (1.0 + p.mu_pi * dt + p.sigma_pi * inc.dw_pi + p.eta_pi * inc.dn_pi),
        v: variance_step(p, s.v, inc, dt),
    }
}

/// Per-path result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub terminal_x_bar: f64,
    pub running_loss: f64,
    pub terminal_loss: f64,
}

impl PathOutcome {
    pub fn total(&self) -> f64 {
        self.running_loss + self.terminal_loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub aborted: usize,
}

/// Path outcomes in path order; aborted paths are `None`.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub paths: Vec<Option<PathOutcome>>,
    pub first_abort: Option<String>,
}

impl Simulation {
    pub fn aborted(&self) -> usize {
        self.paths.iter().filter(|p| p.is_none()).count()
    }

    pub fn completed(&self) -> impl Iterator<Item = &PathOutcome> + Clone {
        self.paths.iter().flatten()
    }

    /// Mean and standard error over completed paths.
    pub fn estimate(&self) -> Result<ObjectiveEstimate> {
        let aborted = self.aborted();
        let n_paths = self.paths.len();
        if aborted as f64 > MAX_ABORT_FRACTION * n_paths as f64 {
            return Err(Error::TooManyAborts {
                aborted,
                n_paths,
                first: self.first_abort.clone().unwrap_or_default(),
            });
        }
        let (mean, std_error) = mean_and_error(self.completed().map(PathOutcome::total));
        Ok(ObjectiveEstimate {
            mean,
            std_error,
            n_paths: n_paths - aborted,
            aborted,
        })
    }

    /// Writes `path,terminal_x_bar,running_loss,terminal_loss` with 17
    /// significant digits. Aborted paths are skipped.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "path,terminal_x_bar,running_loss,terminal_loss")?;
        for (i, path) in self.paths.iter().enumerate() {
            if let Some(o) = path {
                writeln!(
                    out,
                    "{i},{:.16e},{:.16e},{:.16e}",
                    o.terminal_x_bar, o.running_loss, o.terminal_loss
                )?;
            }
        }
        Ok(())
    }
}

/// Sample mean and standard error of the mean, accumulated in order.
pub fn mean_and_error(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // shifted by the first sample, so identical samples give exactly zero spread
    let shift = values.clone().next().unwrap_or(0.0);
    let offset = values.clone().map(|v| v - shift).sum::<f64>() / n as f64;
    let mean = shift + offset;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - shift - offset).powi(2)).sum();
    (mean, (ss / (n - 1) as f64 / n as f64).sqrt())
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Everything a path needs that does not depend on the path.
struct Plan<'a> {
    p: &'a ModelParams,
    n_steps: usize,
    dt: f64,
    sampler: IncrementSampler,
    policy: PolicySpec,
    mode: Mode,
    coefficients: Vec<PolicyCoefficients>,
    survival: Vec<f64>,
}

impl Plan<'_> {
    fn amount(&self, step: usize, x: f64, l: f64) -> f64 {
        match self.policy {
            PolicySpec::ConstantWeight(w) => w * x,
            PolicySpec::Optimal => self.coefficients[step].amount(x, l),
            PolicySpec::PerturbedOptimal(d) => self.coefficients[step].amount(x, l) + d * x,
        }
    }

    fn run(&self, rng: &mut ChaCha8Rng) -> std::result::Result<PathOutcome, String> {
        let p = self.p;
        let death_loss = |x: f64| (p.alpha2 + p.beta2 * (x - p.x2_star)).powi(2);
        let mut state = State::initial(p);
        let mut nominal = Nominal {
            x: p.x0_real,
            l: p.l0_real,
            pi: 1.0,
            v: p.v0,
        };
        let mut running = 0.0;
        let mut loss = death_loss(state.x_bar);
        for n in 0..self.n_steps {
            let inc = self.sampler.draw(rng);
            match self.mode {
                Mode::Written => {
                    let a = self.amount(n, state.x_bar, state.l_bar);
                    state = step_state(p, &state, &inc, a, self.dt);
                }
                Mode::ExactQuotient => {
                    let a = self.amount(n, nominal.x / nominal.pi, nominal.l / nominal.pi) * nominal.pi;
                    nominal = step_nominal(p, &nominal, &inc, a, self.dt);
                    state = State {
                        t: state.t + self.dt,
                        x_bar: nominal.x / nominal.pi,
                        l_bar: nominal.l / nominal.pi,
                        v: nominal.v,
                    };
                }
            }
            if !(state.x_bar.is_finite() && state.l_bar.is_finite() && state.v.is_finite()) {
                return Err(format!("non-finite state after step {}: {state:?}", n + 1));
            }
            let next = death_loss(state.x_bar);
            running += 0.5 * (loss + next) * (self.survival[n] - self.survival[n + 1]);
            loss = next;
        }
        let terminal = (p.alpha1 + p.beta1 * (state.x_bar - p.x1_star)).powi(2) * self.survival[self.n_steps];
        Ok(PathOutcome {
            terminal_x_bar: state.x_bar,
            running_loss: running,
            terminal_loss: terminal,
        })
    }
}

/// Simulates every path and returns their outcomes in path order.
pub fn simulate_paths(vf: &ValueFunction, config: &SimConfig) -> Result<Simulation> {
    config.validate()?;
    let p = vf.params();
    let n_steps = config.n_steps(p.horizon);
    let dt = p.horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|n| n as f64 * dt).collect();
    let coefficients = match config.policy {
        PolicySpec::ConstantWeight(_) => Vec::new(),
        _ => times[..n_steps].iter().map(|&t| vf.policy_coefficients(t)).collect(),
    };
    let plan = Plan {
        p,
        n_steps,
        dt,
        sampler: IncrementSampler::new(p, dt),
        policy: config.policy,
        mode: config.mode,
        coefficients,
        survival: times.iter().map(|&t| (-p.lambda_mort * t).exp()).collect(),
    };
    let results: Vec<_> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| plan.run(&mut path_rng(config.seed, i)))
        .collect();
    let first_abort = results
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.as_ref().err().map(|e| format!("path {i}: {e}")));
    Ok(Simulation {
        paths: results.into_iter().map(|r| r.ok()).collect(),
        first_abort,
    })
}

/// Monte Carlo estimate of `J` at the initial state.
pub fn estimate_objective(vf: &ValueFunction, config: &SimConfig) -> Result<ObjectiveEstimate> {
    simulate_paths(vf, config)?.estimate()
}

/// One paired comparison in the convexity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeStep {
    pub from: f64,
    pub to: f64,
    /// Mean of `J(to) − J(from)` over common paths.
    pub mean_increase: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityProbe {
    pub offsets: Vec<f64>,
    pub estimates: Vec<ObjectiveEstimate>,
    pub steps: Vec<ProbeStep>,
    pub pass: bool,
}

/// Offsets used by the convexity probe, in increasing order.
pub const PROBE_OFFSETS: [f64; 7] = [-0.25, -0.1, -0.05, 0.0, 0.05, 0.1, 0.25];

/// Runs the perturbed-optimal policy for every offset with common random
/// numbers and checks that `J` does not decrease moving away from zero on
/// either side, up to `tolerance_se` paired standard errors.
pub fn convexity_probe(
    vf: &ValueFunction,
    n_paths: usize,
    steps_per_year: usize,
    seed: u64,
    offsets: &[f64],
    tolerance_se: f64,
) -> Result<ConvexityProbe> {
    let runs = offsets
        .iter()
        .map(|&d| {
            let cfg = SimConfig {
                n_paths,
                steps_per_year,
                seed,
                policy: PolicySpec::PerturbedOptimal(d),
                mode: Mode::Written,
            };
            simulate_paths(vf, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates = runs.iter().map(Simulation::estimate).collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..offsets.len()).collect();
    order.sort_by(|&a, &b| offsets[a].abs().total_cmp(&offsets[b].abs()));
    let mut steps = Vec::new();
    for side in [-1.0f64, 1.0] {
        let chain: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| offsets[i] == 0.0 || offsets[i].signum() == side)
            .collect();
        for pair in chain.windows(2) {
            let (a, b) = (&runs[pair[0]], &runs[pair[1]]);
            let diffs: Vec<f64> = a
                .paths
                .iter()
                .zip(&b.paths)
                .filter_map(|(x, y)| Some(y.as_ref()?.total() - x.as_ref()?.total()))
                .collect();
            let (mean, se) = mean_and_error(diffs.iter().copied());
            steps.push(ProbeStep {
                from: offsets[pair[0]],
                to: offsets[pair[1]],
                mean_increase: mean,
                std_error: se,
                pass: mean >= -tolerance_se * se,
            });
        }
    }
    let pass = steps.iter().all(|s| s.pass);
    Ok(ConvexityProbe {
        offsets: offsets.to_vec(),
        estimates,
        steps,
        pass,
    })
}

/// First moments `(E[S]/S0, E[L]/L0, E[V])` of the nominal stock, nominal
/// salary and variance at time `t`.
pub fn analytic_moments(p: &ModelParams, t: f64) -> (f64, f64, f64) {
    let s = ((p.mu_s + p.lambda_s * p.eta_s) * t).exp();
    let l = ((p.mu_l + p.lambda_l * p.eta_ll + p.lambda_c * p.eta_lc) * t).exp();
    let jumps = p.lambda_v * p.eta_vv + p.lambda_c * p.eta_vc;
    let v = if p.kappa == 0.0 {
        p.v0 + (p.kappa * p.delta + jumps) * t
    } else {
        let theta = p.delta + jumps / p.kappa;
        theta + (p.v0 - theta) * (-p.kappa * t).exp()
    };
    (s, l, v)
}

/// Sample mean and standard error of one simulated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulatedMoments {
    pub t: f64,
    pub stock: MomentEstimate,
    pub salary: MomentEstimate,
    pub variance: MomentEstimate,
}

/// Simulates the nominal stock and salary (started at one) together with
/// the variance, and reports sample moments at each requested time.
pub fn simulate_moments(
    p: &ModelParams,
    n_paths: usize,
    steps_per_year: usize,
    seed: u64,
    times: &[f64],
) -> Result<Vec<SimulatedMoments>> {
    let last = times.iter().copied().fold(0.0, f64::max);
    if n_paths == 0 || steps_per_year == 0 || times.iter().any(|&t| !t.is_finite() || t < 0.0) {
        return Err(Error::SimConfig("invalid moment simulation request".into()));
    }
    let dt = 1.0 / steps_per_year as f64;
    let marks: Vec<usize> = times.iter().map(|&t| (t / dt).round() as usize).collect();
    let n_steps = (last / dt).round() as usize;
    let sampler = IncrementSampler::new(p, dt);

    let samples: Vec<Vec<[f64; 3]>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let (mut s, mut l, mut v) = (1.0, 1.0, p.v0);
            let mut out = vec![[0.0; 3]; marks.len()];
            for n in 0..=n_steps {
                for (k, &m) in marks.iter().enumerate() {
                    if m == n {
                        out[k] = [s, l, v];
                    }
                }
                if n == n_steps {
                    break;
                }
                let inc = sampler.draw(&mut rng);
                let vp = f64::max(v, 0.0);
                s *= 1.0 + p.mu_s * dt + p.sigma_ss * inc.dw_s + p.eta_s * inc.dn_s;
                l *= 1.0
                    + p.mu_l * dt
                    + p.sigma_ls * inc.dw_s
                    + vp.sqrt() * inc.dw_l
                    + p.eta_ll * inc.dn_l
                    + p.eta_lc * inc.dn_c;
                v = variance_step(p, v, &inc, dt);
            }
            out
        })
        .collect();

    Ok(times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let column = |j: usize| {
                let (mean, std_error) = mean_and_error(samples.iter().map(move |row| row[k][j]));
                MomentEstimate { mean, std_error }
            };
            SimulatedMoments {
                t,
                stock: column(0),
                salary: column(1),
                variance: column(2),
            }
        })
        .collect())
}
