//! `densapprox` experiment runner.
//!
//! Each subcommand mirrors one registered experiment; the config file's
//! `experiment` field must agree with the subcommand, so a config cannot be
//! silently run under the wrong protocol. Exit codes: 0 on full success, 2
//! when the run completed but one or more grid cells failed, 1 on config or
//! I/O failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use densapprox_cli::config::ExperimentConfig;
use densapprox_cli::experiments::{find_experiment, Artifact};
use densapprox_cli::{output, CliError};

#[derive(Parser)]
#[command(
    name = "densapprox",
    version,
    about = "Density-approximation experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Laplace normalizer error across the (n, p) grid
    LaplaceScaling(RunArgs),
    /// Marginal Laplace density error on the two-group exponential model
    Marginal(RunArgs),
    /// Saddlepoint densities against closed-form references
    SaddlepointExactness(RunArgs),
    /// Renormalized conditional saddlepoint against the exact beta density
    DoubleSaddle(RunArgs),
    /// Per-cell assumption audit reports (JSON)
    Diagnose(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::LaplaceScaling(a) => ("laplace-scaling", a),
            Command::Marginal(a) => ("marginal", a),
            Command::SaddlepointExactness(a) => ("saddlepoint-exactness", a),
            Command::DoubleSaddle(a) => ("double-saddle", a),
            Command::Diagnose(a) => ("diagnose", a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Artifact destination; falls back to the config's `output`, then stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the cell grid (0 = one per core)
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (tag, args) = cli.command.split();
    match run(tag, args) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether any grid cell failed.
fn run(tag: &'static str, args: &RunArgs) -> Result<bool, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.experiment != tag {
        return Err(CliError::Config(format!(
            "config names experiment '{}' but the subcommand is '{tag}'",
            cfg.experiment
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let experiment = find_experiment(tag).expect("subcommands mirror the registry");
    let artifact = experiment.run(&cfg, args.threads)?;
    emit(&artifact, args, &cfg)?;
    eprintln!("{}", artifact.summary());
    Ok(artifact.any_cell_failed())
}

fn emit(artifact: &Artifact, args: &RunArgs, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dest = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from));
    match (artifact, dest) {
        (Artifact::Scaling(run), Some(path)) => output::write_csv(&run.cells, &path),
        (Artifact::Scaling(run), None) => {
            print!("{}", output::render_csv(&run.cells));
            Ok(())
        }
        (Artifact::Json { value, .. }, Some(path)) => output::write_json(value, &path),
        (Artifact::Json { value, .. }, None) => {
            print!("{}", output::render_json(value));
            Ok(())
        }
    }
}
