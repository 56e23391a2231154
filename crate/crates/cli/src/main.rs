//! `sasv`: simulate, calibrate, fuse, decide and evaluate spoofing-aware
//! speaker verification scores.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 fit error,
//! 4 evaluation error.

mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sasv_fusion::calibration::{fit_gaussian_backend, fit_stream_calibration, ModelDocument, ScoreStream};
use sasv_fusion::decision::{decide_linear, decide_optimal_llr, CostMatrix, Priors};
use sasv_fusion::format::fmt_f64;
use sasv_fusion::fusion::{default_rho_grid, rho_objective_curve, RhoObjective};
use sasv_fusion::io::{read_trials, write_trials, write_trials_with_column};
use sasv_fusion::metrics::evaluate_system;
use sasv_fusion::simulation::{export_boundary_grid, sample_trials, GridParams, SimulationSpec};
use sasv_fusion::system::{fit_llr_stream, FittedSystem};
use sasv_fusion::{Error, TrialScore};

use config::{llr_pairs, load_backend, RunConfig};

/// A failed command: exit code and diagnostic.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

pub type Outcome<T> = Result<T, Failure>;

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl ToString) -> Self {
        Self::new(2, message.to_string())
    }

    pub fn fit(message: impl Into<String>) -> Self {
        Self::new(3, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Fit(_) => 3,
            Error::Metric(_) => 4,
            Error::Domain(_) | Error::Config(_) | Error::Format(_) | Error::Io(_) => 2,
        };
        Self::new(code, e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "sasv", version, about = "Spoofing-aware speaker verification score fusion")]
struct Cli {
    /// Overrides the seed of a simulation spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a labeled trial file from a simulation spec.
    Simulate {
        /// Simulation spec (JSON).
        spec: PathBuf,
    },
    /// Fit one model from labeled trials.
    Fit {
        trials: PathBuf,
        #[arg(long, value_enum)]
        what: FitTarget,
        /// Back-end model, for the LLR calibrations.
        #[arg(long)]
        backend: Option<PathBuf>,
    },
    /// Append the fused score of the configured system.
    Fuse { trials: PathBuf },
    /// Append accept/reject decisions of an LLR-fusing system.
    Decide {
        trials: PathBuf,
        #[arg(long, value_enum, default_value = "optimal")]
        policy: PolicyArg,
    },
    /// Print the metrics report of the configured system.
    Evaluate { trials: PathBuf },
    /// Export linear and optimal accept regions on an LLR grid (CSV).
    Boundary(BoundaryArgs),
    /// Search rho for an l3/l3c system and print the objective curve.
    GridRho {
        /// Development trials.
        trials: PathBuf,
        #[arg(long, value_enum, default_value = "min-sasv-eer")]
        objective: ObjectiveArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitTarget {
    AffineAsv,
    AffineCm,
    Backend,
    AffineLlrAsv,
    AffineLlrCm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Optimal,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    MinSasvEer,
    MinRisk,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    asv_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    asv_max: f64,
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    cm_min: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    cm_max: f64,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    step: f64,
    /// Adds a column for the optimal rule under these priors,
    /// given as `spf,nonbf,tarbf`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mismatched: Option<Vec<f64>>,
}

pub fn read_trial_file(path: &Path) -> Outcome<Vec<TrialScore>> {
    let file = File::open(path).map_err(|e| Failure::input(format!("cannot open {}: {e}", path.display())))?;
    read_trials(io::BufReader::new(file)).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Runs `write` against the `--out` file, or standard output.
fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Outcome<()> {
    let result = match out {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            write(&mut w).and_then(|_| w.flush().map_err(Error::from))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write(&mut w).and_then(|_| w.flush().map_err(Error::from))
        }
    };
    match result {
        // A closed pipe downstream (e.g. `| head`) is not an error.
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other.map_err(Failure::from),
    }
}

fn emit_text(out: Option<&Path>, text: &str) -> Outcome<()> {
    emit(out, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn require_config(cli: &Cli) -> Outcome<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::input("this command needs --config"))?;
    RunConfig::load(path)
}

fn simulate(cli: &Cli, spec: &Path) -> Outcome<()> {
    let text = fs::read_to_string(spec).map_err(|e| Failure::input(format!("cannot read {}: {e}", spec.display())))?;
    let mut spec = SimulationSpec::from_json(&text).map_err(Failure::input)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    let trials = sample_trials(&spec).map_err(Failure::input)?;
    emit(cli.out.as_deref(), |w| write_trials(w, &trials))
}

fn fit(cli: &Cli, trials: &Path, what: FitTarget, backend: Option<&Path>) -> Outcome<()> {
    let trials = read_trial_file(trials)?;
    let as_fit = |e: Error| Failure::fit(e.to_string());
    let doc = match what {
        FitTarget::AffineAsv => {
            ModelDocument::Affine(fit_stream_calibration(&trials, ScoreStream::Asv).map_err(as_fit)?)
        }
        FitTarget::AffineCm => ModelDocument::Affine(fit_stream_calibration(&trials, ScoreStream::Cm).map_err(as_fit)?),
        FitTarget::Backend => ModelDocument::Backend(fit_gaussian_backend(&trials).map_err(as_fit)?),
        FitTarget::AffineLlrAsv | FitTarget::AffineLlrCm => {
            let path = backend.ok_or_else(|| Failure::input("LLR calibrations need --backend"))?;
            let backend = load_backend(path)?;
            let stream = if matches!(what, FitTarget::AffineLlrAsv) {
                ScoreStream::Asv
            } else {
                ScoreStream::Cm
            };
            ModelDocument::Affine(fit_llr_stream(&backend, &trials, stream).map_err(as_fit)?)
        }
    };
    emit_text(cli.out.as_deref(), &doc.to_json())
}

fn fuse(cli: &Cli, trials: &Path) -> Outcome<()> {
    let system = require_config(cli)?.system(2)?;
    let trials = read_trial_file(trials)?;
    let scores = trials
        .iter()
        .map(|t| system.fuse(&t.scores).map(fmt_f64))
        .collect::<Result<Vec<_>, _>>()?;
    emit(cli.out.as_deref(), |w| {
        write_trials_with_column(w, &trials, "score", &scores)
    })
}

fn decide(cli: &Cli, trials: &Path, policy: PolicyArg) -> Outcome<()> {
    let config = require_config(cli)?;
    let system = config.system(4)?;
    if !system.id().uses_backend() {
        return Err(Failure::new(
            4,
            format!(
                "system {} does not fuse LLRs; decisions need l2, l2c, l3 or l3c",
                system.id()
            ),
        ));
    }
    let trials = read_trial_file(trials)?;
    let decisions = trials
        .iter()
        .map(|t| {
            let l = system.llrs(&t.scores)?.expect("LLR systems yield LLRs");
            let outcome = match policy {
                PolicyArg::Optimal => decide_optimal_llr(&l, &config.priors, &config.costs)?,
                PolicyArg::Linear => decide_linear(&l, &config.priors),
            };
            Ok(if outcome.is_accept() { "accept" } else { "reject" }.to_string())
        })
        .collect::<Outcome<Vec<_>>>()?;
    emit(cli.out.as_deref(), |w| {
        write_trials_with_column(w, &trials, "decision", &decisions)
    })
}

fn evaluate(cli: &Cli, trials: &Path) -> Outcome<()> {
    let system = require_config(cli)?.system(4)?;
    let text = fs::read(trials).map_err(|e| Failure::input(format!("cannot read {}: {e}", trials.display())))?;
    if text.iter().all(u8::is_ascii_whitespace) {
        return Err(Failure::new(4, format!("{} contains no trials", trials.display())));
    }
    let trials = read_trials(text.as_slice()).map_err(|e| Failure::input(format!("{}: {e}", trials.display())))?;
    let report = evaluate_system(&trials, &system).map_err(|e| Failure::new(4, e.to_string()))?;
    emit_text(cli.out.as_deref(), &report.to_json())
}

fn boundary(cli: &Cli, args: &BoundaryArgs) -> Outcome<()> {
    let (priors, costs) = match cli.config.as_deref() {
        Some(path) => {
            let config = RunConfig::load(path)?;
            (config.priors, config.costs)
        }
        None => (Priors::flat(), CostMatrix::unit()),
    };
    let params = GridParams::new(args.asv_min, args.asv_max, args.cm_min, args.cm_max, args.step)?;
    let mismatched = args
        .mismatched
        .as_deref()
        .map(|p| match p {
            [spf, nonbf, tarbf] => Priors::new(*spf, *nonbf, *tarbf).map_err(Failure::from),
            _ => Err(Failure::input(format!(
                "--mismatched takes three priors, got {}",
                p.len()
            ))),
        })
        .transpose()?;
    let grid = export_boundary_grid(&priors, &costs, &params, mismatched.as_ref())?;
    emit(cli.out.as_deref(), |w| grid.write_csv(w))
}

#[derive(serde::Serialize)]
struct RhoReport {
    rho: f64,
    curve: Vec<RhoPoint>,
}

#[derive(serde::Serialize)]
struct RhoPoint {
    rho: f64,
    value: f64,
}

fn grid_rho(cli: &Cli, trials: &Path, objective: ObjectiveArg) -> Outcome<()> {
    let config = require_config(cli)?;
    if !config.system.needs_rho() {
        return Err(Failure::input(format!("system {} has no rho to search", config.system)));
    }
    let provisional = FittedSystem::new(config.system, config.load_models()?, Some(0.0))?;
    let pairs = llr_pairs(&provisional, &read_trial_file(trials)?)?;
    let objective = match objective {
        ObjectiveArg::MinSasvEer => RhoObjective::MinSasvEer,
        ObjectiveArg::MinRisk => RhoObjective::MinEmpiricalRisk {
            costs: config.costs,
            priors: config.priors,
        },
    };
    let curve = rho_objective_curve(&pairs, &objective, &default_rho_grid())?;
    let best = curve
        .iter()
        .fold(curve[0], |best, &p| if p.1 < best.1 { p } else { best });
    let report = RhoReport {
        rho: best.0,
        curve: curve.into_iter().map(|(rho, value)| RhoPoint { rho, value }).collect(),
    };
    emit_text(
        cli.out.as_deref(),
        &serde_json::to_string_pretty(&report).expect("finite values serialize"),
    )
}

fn run(cli: &Cli) -> Outcome<()> {
    match &cli.command {
        Command::Simulate { spec } => simulate(cli, spec),
        Command::Fit { trials, what, backend } => fit(cli, trials, *what, backend.as_deref()),
        Command::Fuse { trials } => fuse(cli, trials),
        Command::Decide { trials, policy } => decide(cli, trials, *policy),
        Command::Evaluate { trials } => evaluate(cli, trials),
        Command::Boundary(args) => boundary(cli, args),
        Command::GridRho { trials, objective } => grid_rho(cli, trials, *objective),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sasv: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
