use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod error;
mod output;

use config::{parse_disturbance, parse_point, parse_schedule, parse_vector, DisturbanceChoice, PhiSetting, PlantChoice, RunConfig};
use error::{CliError, CliResult};
use fbs_hinf::cstr::OperatingPoint;
use fbs_hinf::scenario::{BilinearInput, Setpoint};

/// Robust H-infinity fuzzy output-feedback synthesis for fuzzy bilinear
/// systems, with simulation and the reactor benchmark.
#[derive(Parser)]
#[command(name = "fbs-hinf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis LMIs and write `synthesis.json`.
    Synthesize(SynthesizeArgs),
    /// Re-check every certificate of a synthesis report.
    Verify(VerifyArgs),
    /// Simulate the closed loop of a synthesis report and write traces.
    Simulate(SimulateArgs),
    /// Reproduce the reactor benchmark and compare claims with measurements.
    Bench(BenchArgs),
    /// Synthesize over a grid of gamma, epsilon and phi values.
    Sweep(SweepArgs),
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Built-in benchmark model [possible values: cstr] [default: cstr]
    #[arg(long)]
    bench: Option<String>,
    /// Model JSON file, instead of a benchmark
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct ScalarArgs {
    /// H-infinity attenuation level [default: 0.3]
    #[arg(long)]
    gamma: Option<f64>,
    /// Control amplitude [default: 0.1]
    #[arg(long)]
    beta: Option<f64>,
    /// Cross-term weight, used for every rule triple [default: 1]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Membership-rate bound, a number or `auto` for the largest feasible value [default: 0]
    #[arg(long)]
    phi: Option<PhiSetting>,
    /// Share one Lyapunov matrix and one gain across rules
    #[arg(long)]
    common: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Args, Clone, Default)]
struct OutArgs {
    /// Output directory [default: .]
    #[arg(long, env = "FBS_HINF_OUT_DIR")]
    out: Option<PathBuf>,
    /// Concurrent jobs for batches [default: number of CPUs]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    scalars: ScalarArgs,
    #[command(flatten)]
    out: OutArgs,
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Synthesis report to check
    report: PathBuf,
    /// Expected values; a mismatch with the report fails verification
    #[command(flatten)]
    scalars: ScalarArgs,
    /// Also write `verification.json` here
    #[arg(long, env = "FBS_HINF_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthesis report providing the model and controller
    report: PathBuf,
    /// Preset scenarios: fig2 .. fig6, or all
    #[arg(long)]
    figure: Option<String>,
    /// Initial state `x1,x2,...`; repeat for a batch [default: 3.1,1.5 for the benchmark]
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    x0: Vec<Vec<f64>>,
    /// Simulated time [default: 1]
    #[arg(long)]
    horizon: Option<f64>,
    /// Integration step [default: 1e-4]
    #[arg(long)]
    step: Option<f64>,
    /// `reference`, `zero`, a JSON file or inline JSON [default: reference for the benchmark, else zero]
    #[arg(long, value_parser = parse_disturbance)]
    disturbance: Option<DisturbanceChoice>,
    /// Desired operating point `x1,...,xn:u` [default: origin]
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    setpoint: Option<OperatingPoint>,
    /// Setpoint switches `t@x1,...,xn:u;...` or a JSON file
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<::std::vec::Vec<Setpoint>>,
    /// Plant to drive [default: fbs]
    #[arg(long, value_enum)]
    plant: Option<PlantChoice>,
    /// Input multiplying the bilinear term [default: deviation]
    #[arg(long, value_enum)]
    bilinear: Option<BilinearArg>,
    /// Settling band as a fraction of the initial deviation [default: 0.02]
    #[arg(long)]
    band: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
    /// Trace format
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BilinearArg {
    Deviation,
    Total,
}

impl From<BilinearArg> for BilinearInput {
    fn from(b: BilinearArg) -> Self {
        match b {
            BilinearArg::Deviation => BilinearInput::Deviation,
            BilinearArg::Total => BilinearInput::Total,
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark name [possible values: cstr]
    #[arg(long, default_value = "cstr")]
    bench: String,
    /// Integration step [default: 1e-4]
    #[arg(long)]
    step: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
    /// Trace format
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated gamma values [default: 0.3]
    #[arg(long, value_parser = parse_vector)]
    gamma: Option<::std::vec::Vec<f64>>,
    /// Control amplitude [default: 0.1]
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated epsilon values [default: 1]
    #[arg(long, value_parser = parse_vector)]
    epsilon: Option<::std::vec::Vec<f64>>,
    /// Comma-separated phi values [default: 0]
    #[arg(long, value_parser = parse_vector)]
    phi: Option<::std::vec::Vec<f64>>,
    /// Share one Lyapunov matrix and one gain across rules
    #[arg(long)]
    common: bool,
    #[command(flatten)]
    out: OutArgs,
    /// Table format
    #[arg(long, value_enum, default_value_t)]
    format: Format,
    /// JSON run configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ScalarArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            gamma: self.gamma,
            beta: self.beta,
            epsilon: self.epsilon.map(fbs_hinf::synth::Epsilon::Uniform),
            phi: self.phi,
            common_lyapunov: self.common.then_some(true),
            ..Default::default()
        }
    }
}

fn with_file(path: Option<&PathBuf>, flags: RunConfig) -> CliResult<RunConfig> {
    let base = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(flags))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synthesize(a) => {
            let flags = RunConfig {
                bench: a.model.bench,
                model: a.model.model,
                out: a.out.out,
                jobs: a.out.jobs,
                ..a.scalars.to_config()
            };
            commands::synthesize(&with_file(a.config.as_ref(), flags)?)
        }
        Command::Verify(a) => commands::verify(&a.report, &a.scalars.to_config(), a.out),
        Command::Simulate(a) => {
            let flags = RunConfig {
                x0: (!a.x0.is_empty()).then_some(a.x0),
                horizon: a.horizon,
                step: a.step,
                disturbance: a.disturbance,
                setpoint: a.setpoint,
                schedule: a.schedule,
                plant: a.plant,
                bilinear: a.bilinear.map(Into::into),
                band_fraction: a.band,
                out: a.out.out,
                jobs: a.out.jobs,
                ..Default::default()
            };
            let cfg = with_file(a.config.as_ref(), flags)?;
            commands::simulate(&a.report, a.figure.as_deref(), &cfg, a.format == Format::Json)
        }
        Command::Bench(a) => {
            if a.bench != "cstr" {
                return Err(CliError::usage("usage", format!("unknown benchmark {:?} (known: cstr)", a.bench)));
            }
            let cfg = RunConfig {
                step: a.step,
                out: a.out.out,
                jobs: a.out.jobs,
                ..Default::default()
            };
            commands::bench(&cfg, a.format == Format::Json)
        }
        Command::Sweep(a) => {
            let flags = RunConfig {
                bench: a.model.bench,
                model: a.model.model,
                beta: a.beta,
                common_lyapunov: a.common.then_some(true),
                out: a.out.out,
                jobs: a.out.jobs,
                ..Default::default()
            };
            let cfg = with_file(a.config.as_ref(), flags)?;
            let grid = commands::SweepGrid {
                gamma: a.gamma.unwrap_or_else(|| vec![cfg.gamma.unwrap_or(config::DEFAULT_GAMMA)]),
                epsilon: a.epsilon.unwrap_or_else(|| vec![config::DEFAULT_EPSILON]),
                phi: a.phi.unwrap_or_else(|| vec![0.0]),
            };
            commands::sweep(&cfg, &grid, a.format == Format::Json)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("error: reason=usage {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
