//! Command-line front end: validate a configuration, evaluate the closed
//! form, simulate, and run the verification checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dcpension::closedform::Riccati;
use dcpension::montecarlo::simulate_paths;
use dcpension::verify::{run_checks, CheckGroup, McSettings, VerifyOptions};
use dcpension::{Error, Mode, ModelParams, PolicySpec, SimConfig, State, ValidatedParams, ValueFunction};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "dcpension", version, about = "Optimal DC pension investment: closed form, simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Parameter file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Write a run manifest (JSON) to this file.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check every parameter constraint.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Print the derived constants as JSON.
    Coeffs {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the value function and its six coefficients at one state.
    Value {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        #[arg(long, allow_negative_numbers = true)]
        l: f64,
        #[arg(long)]
        v: f64,
    },
    /// Tabulate the optimal policy over a wealth grid.
    Policy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t: f64,
        /// a:b:n, n equally spaced points including both ends.
        #[arg(long, allow_hyphen_values = true)]
        grid_x: String,
        #[arg(long, allow_negative_numbers = true)]
        l: f64,
        #[arg(long)]
        v: f64,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the objective by Monte Carlo.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 252)]
        steps_per_year: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// optimal, constant:<w> or perturbed:<d>.
        #[arg(long, default_value = "optimal", allow_hyphen_values = true)]
        policy: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Written)]
        mode: ModeArg,
        /// Per-path CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run residual checks; exits 3 if any fails.
    Verify {
        #[arg(value_enum)]
        which: Which,
        #[command(flatten)]
        common: Common,
        /// Tolerance for every deterministic check, replacing the defaults.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, default_value_t = 20_000)]
        probe_paths: usize,
        #[arg(long, default_value_t = 252)]
        steps_per_year: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write the JSON report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Written,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    All,
    Ode,
    Hjb,
    Foc,
    Ansatz,
    Mc,
}

impl Which {
    fn groups(self) -> Vec<CheckGroup> {
        match self {
            Which::All => CheckGroup::ALL.to_vec(),
            Which::Ode => vec![CheckGroup::Ode],
            Which::Hjb => vec![CheckGroup::Hjb],
            Which::Foc => vec![CheckGroup::Foc],
            Which::Ansatz => vec![CheckGroup::Ansatz],
            Which::Mc => vec![CheckGroup::Mc],
        }
    }
}

enum Failure {
    Usage(anyhow::Error),
    Config(anyhow::Error),
    Verify,
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Json(_) | Error::Io { .. } => Failure::Config(e.into()),
            Error::SimConfig(_) | Error::InvalidState { .. } | Error::TimeOrder { .. } => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config: &'a Path,
    parameters: &'a ModelParams,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    wall_clock_seconds: f64,
}

fn load(common: &Common) -> Result<ValidatedParams, Failure> {
    let params = ModelParams::from_json_file(&common.config)?;
    params.validate().map_err(|e| Failure::from(Error::from(e)))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts[..] else {
        bail!("grid must be a:b:n, got {spec:?}");
    };
    let a: f64 = a.parse().with_context(|| format!("bad grid start {a:?}"))?;
    let b: f64 = b.parse().with_context(|| format!("bad grid end {b:?}"))?;
    let n: usize = n.parse().with_context(|| format!("bad grid count {n:?}"))?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        bail!("grid needs finite ends and at least one point");
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let mut outputs = Vec::new();
    let mut seed = None;
    let mut verify_failed = false;

    let (name, common, params) = match &cli.command {
        Command::Validate { common } => {
            let params = load(common)?;
            eprintln!("{}: valid", common.config.display());
            ("validate", common, params)
        }
        Command::Coeffs { common } => {
            let params = load(common)?;
            #[derive(Serialize)]
            struct Coeffs {
                varpi: dcpension::model::Varpi,
                a: dcpension::model::GrowthRates,
                riccati: Riccati,
            }
            let c = params.coeffs();
            print_json(&Coeffs {
                varpi: c.varpi,
                a: c.a,
                riccati: Riccati::from_params(&params),
            })?;
            ("coeffs", common, params)
        }
        Command::Value { common, t, x, l, v } => {
            let params = load(common)?;
            let vf = ValueFunction::new(params)?;
            let state = State::new(*t, *x, *l, *v);
            #[derive(Serialize)]
            struct ValueOut {
                state: State,
                value: f64,
                components: dcpension::ValueDecomposition,
            }
            let value = vf.value(&state)?;
            print_json(&ValueOut {
                state,
                value,
                components: vf.decomposition(*t, *v)?,
            })?;
            ("value", common, params)
        }
        Command::Policy {
            common,
            t,
            grid_x,
            l,
            v,
            out,
        } => {
            let params = load(common)?;
            let grid = parse_grid(grid_x).map_err(Failure::Usage)?;
            let vf = ValueFunction::new(params)?;
            let mut rows = Vec::with_capacity(grid.len());
            for &x in &grid {
                rows.push((x, vf.optimal_policy(&State::new(*t, x, *l, *v))?));
            }
            let write = |w: &mut dyn Write| -> std::io::Result<()> {
                writeln!(w, "x_bar,weight,amount")?;
                for (x, p) in &rows {
                    let weight = p.weight.map_or("NaN".to_string(), |w| format!("{w:.16e}"));
                    writeln!(w, "{x:.16e},{weight},{:.16e}", p.amount)?;
                }
                w.flush()
            };
            match out {
                Some(path) => {
                    write(&mut create(path)?).context("writing policy CSV")?;
                    outputs.push(path.clone());
                }
                None => write(&mut std::io::stdout().lock()).context("writing policy CSV")?,
            }
            ("policy", common, params)
        }
        Command::Simulate {
            common,
            paths,
            steps_per_year,
            seed: s,
            policy,
            mode,
            out,
        } => {
            let params = load(common)?;
            let config = SimConfig {
                n_paths: *paths,
                steps_per_year: *steps_per_year,
                seed: *s,
                policy: PolicySpec::parse(policy)?,
                mode: match mode {
                    ModeArg::Written => Mode::Written,
                    ModeArg::Exact => Mode::ExactQuotient,
                },
            };
            config.validate()?;
            seed = Some(*s);
            let vf = ValueFunction::new(params)?;
            let sim = simulate_paths(&vf, &config)?;
            let estimate = sim.estimate()?;
            if let Some(path) = out {
                let mut w = create(path)?;
                sim.write_csv(&mut w).and_then(|_| w.flush()).context("writing path CSV")?;
                outputs.push(path.clone());
            }
            #[derive(Serialize)]
            struct SimulateOut {
                config: SimConfig,
                estimate: dcpension::ObjectiveEstimate,
            }
            print_json(&SimulateOut { config, estimate })?;
            ("simulate", common, params)
        }
        Command::Verify {
            which,
            common,
            tol,
            paths,
            probe_paths,
            steps_per_year,
            seed: s,
            report,
        } => {
            let params = load(common)?;
            let vf = ValueFunction::new(params)?;
            let opts = VerifyOptions {
                tolerance: *tol,
                mc: McSettings {
                    n_paths: *paths,
                    steps_per_year: *steps_per_year,
                    seed: *s,
                    probe_paths: *probe_paths,
                    ..McSettings::default()
                },
                ..VerifyOptions::default()
            };
            seed = Some(*s);
            let reports = run_checks(&vf, &which.groups(), &opts)?;
            for r in &reports {
                eprintln!("{}", r.summary());
            }
            verify_failed = reports.iter().any(|r| !r.pass);
            #[derive(Serialize)]
            struct VerifyOut<'a> {
                pass: bool,
                checks: &'a [dcpension::ResidualReport],
            }
            let doc = VerifyOut {
                pass: !verify_failed,
                checks: &reports,
            };
            if let Some(path) = report {
                let mut w = create(path)?;
                serde_json::to_writer_pretty(&mut w, &doc).context("writing report")?;
                writeln!(w).and_then(|_| w.flush()).context("writing report")?;
                outputs.push(path.clone());
            }
            print_json(&doc)?;
            ("verify", common, params)
        }
    };

    if let Some(path) = &common.manifest {
        let manifest = RunManifest {
            subcommand: name,
            config: &common.config,
            parameters: &params,
            seed,
            outputs,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &manifest).context("writing manifest")?;
        writeln!(w).and_then(|_| w.flush()).context("writing manifest")?;
    }
    if verify_failed {
        return Err(Failure::Verify);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verify) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
