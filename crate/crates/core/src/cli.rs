//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input or any other error, 3 when
//! verification completes with a failing verdict. Diagnostics go to stderr
//! as `error[code]: message`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::{simulate_terminal, Engine, SimConfig};
use crate::error::{Error, Result};
use crate::figures::figure_data;
use crate::io::{model_hash, model_to_text, samples_to_csv, write_atomic};
use crate::measure::TargetMeasure;
use crate::synthesis::{synthesize, wronskian_sup, DiffusionModel};
use crate::verify::{consistency_report, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_VERDICT_FAIL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "speedsynth", version, about = "Diffusions with a prescribed law at an independent exponential time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the model and write its text description.
    Synthesize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate X_T and write the samples as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate and check the result against the target; writes a JSON report.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write speed-density curves for a reference figure as CSV.
    FigureData {
        #[arg(long)]
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Built-in target as family:params, e.g. uniform:-1,1 or laplace:1.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "target_csv")]
    target: Option<String>,
    /// Target read from a CSV file (see --kind).
    #[arg(long)]
    target_csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "samples")]
    kind: CsvKind,
    #[arg(long, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long)]
    lambda: f64,
    /// Wronskian, or `canonical` for the largest admissible value.
    #[arg(long, allow_hyphen_values = true)]
    w: String,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Defaults to sde when the speed measure has no atoms, ctmc otherwise.
    #[arg(long, value_enum)]
    engine: Option<EngineChoice>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Quantile sites for the ctmc engine.
    #[arg(long, default_value_t = 400)]
    sites: usize,
    /// Truncation quantile for infinite supports.
    #[arg(long, default_value_t = 1e-6)]
    truncation: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CsvKind {
    Samples,
    Calls,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EngineChoice {
    Sde,
    Ctmc,
    Both,
}

/// Parses `family:p1,p2,...`.
pub fn parse_target_spec(spec: &str) -> Result<TargetMeasure> {
    let (family, params) = spec
        .split_once(':')
        .ok_or_else(|| Error::InvalidParameters(format!("target '{spec}' is not family:params")))?;
    let params = params
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameters(format!("bad parameter '{p}' in target '{spec}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    TargetMeasure::builtin(family.trim(), &params)
}

fn build_model(args: &ModelArgs) -> Result<DiffusionModel> {
    let target = match (&args.target, &args.target_csv) {
        (Some(spec), None) => parse_target_spec(spec)?,
        (None, Some(path)) => match args.kind {
            CsvKind::Samples => TargetMeasure::from_samples_csv(path)?,
            CsvKind::Calls => TargetMeasure::from_call_prices_csv(path)?,
        },
        _ => return Err(Error::InvalidParameters("give exactly one of --target or --target-csv".into())),
    };
    let w = match args.w.trim() {
        "canonical" => wronskian_sup(&target, args.x0)?,
        raw => raw
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameters(format!("--w expects a number or 'canonical', got '{raw}'")))?,
    };
    synthesize(&target, args.x0, args.lambda, w)
}

fn engines(choice: Option<EngineChoice>, model: &DiffusionModel) -> Vec<Engine> {
    match choice {
        Some(EngineChoice::Sde) => vec![Engine::Sde],
        Some(EngineChoice::Ctmc) => vec![Engine::Ctmc],
        Some(EngineChoice::Both) => vec![Engine::Sde, Engine::Ctmc],
        None if model.speed_atoms().is_empty() => vec![Engine::Sde],
        None => vec![Engine::Ctmc],
    }
}

fn sim_config(args: &SimArgs, engine: Engine) -> SimConfig {
    SimConfig {
        n_paths: args.n,
        dt: args.dt,
        truncation_quantile: args.truncation,
        seed: args.seed,
        engine,
        n_sites: args.sites,
        ..SimConfig::default()
    }
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout.write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Synthesize { model, out } => {
            let m = build_model(&model)?;
            emit(&out, &model_to_text(&m)?, stdout)?;
        }
        Command::Simulate { model, sim, out } => {
            let m = build_model(&model)?;
            let engine = match engines(sim.engine, &m).as_slice() {
                [e] => *e,
                _ => return Err(Error::InvalidParameters("simulate runs one engine; use verify for both".into())),
            };
            let sample = simulate_terminal(&m, &sim_config(&sim, engine))?;
            emit(&out, &samples_to_csv(&sample, &model_hash(&m)?), stdout)?;
        }
        Command::Verify { model, sim, out } => {
            let m = build_model(&model)?;
            let list = engines(sim.engine, &m);
            let cfg = VerifyConfig::new(sim_config(&sim, list[0]), list);
            let report = consistency_report(&m, &cfg)?;
            let mut json = report.to_json();
            json.push('\n');
            emit(&out, &json, stdout)?;
            if !report.passed() {
                return Ok(EXIT_VERDICT_FAIL);
            }
        }
        Command::FigureData { figure, out } => {
            emit(&out, &figure_data(&figure)?.to_csv(), stdout)?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs the command line `argv` (program name first) with the given output
/// streams and returns the exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error[{}]: {e}", e.code());
            EXIT_INVALID
        }
    }
}

/// Runs against the process's stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
