use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cq_core::harness::config::RawConfig;
use cq_core::harness::{run, Experiment, RunConfig};
use cq_core::Error;

#[derive(Parser)]
#[command(name = "cq", version, about = "Truncated/shifted Q-decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; beats both `output_dir` and `CQ_OUT`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Export exact reference tables of a chain.
    Oracle(RunArgs),
    /// Train a tabular learner on a chain.
    Tabular(RunArgs),
    /// Train an actor-critic agent on the point-reaching task.
    Deep(RunArgs),
    /// Run a grid of tabular or deep configurations.
    Sweep(RunArgs),
    /// Print convergence speedups from logged runs.
    Report(RunArgs),
}

fn load(experiment: Experiment, args: &RunArgs) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut raw = RawConfig::parse(&text)?;
    match raw.get("experiment") {
        None => raw.set("experiment", experiment.name()),
        Some(e) if e == experiment.name() => {}
        Some(e) => {
            return Err(Error::Config(format!(
                "config is for `{e}` but the `{experiment}` command was given"
            )))
        }
    }
    if let Some(seed) = args.seed {
        raw.set("seeds", seed.to_string());
    }
    if let Some(dir) = std::env::var_os("CQ_OUT") {
        raw.set("output_dir", dir.to_string_lossy());
    }
    if let Some(dir) = &args.out {
        raw.set("output_dir", dir.to_string_lossy());
    }
    RunConfig::from_raw(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Oracle(a) => (Experiment::Oracle, a),
        Command::Tabular(a) => (Experiment::Tabular, a),
        Command::Deep(a) => (Experiment::Deep, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
        Command::Report(a) => (Experiment::Report, a),
    };
    let result = load(experiment, args).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.render());
            for w in outcome.warnings() {
                eprintln!("{w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
