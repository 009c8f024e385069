use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratchet_cli::{run, CommandKind, RunOptions};

/// Two-level vibron ratchet simulator.
///
/// Every subcommand reads a TOML run configuration and writes summary.json
/// plus CSV tables into the output directory. The summary echoes the fully
/// resolved configuration (units in rad/fs, defaults filled), so it can be
/// fed back as a run file to reproduce the artifacts exactly.
#[derive(Parser)]
#[command(name = "ratchet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured model and dump the trajectory.
    Simulate(RunArgs),
    /// Check numerical sweep transitions against the analytic law.
    LzValidate(RunArgs),
    /// Analyse forward and reverse crossing solvability, no integration.
    Crossing(RunArgs),
    /// Forward run with the population trigger, then the reverse probe.
    Ratchet(RunArgs),
    /// Grid scan over coupling strength and drive amplitude.
    Sweep(RunArgs),
    /// Robustness probes: shrunken drive and second-vibron knockout.
    Mutate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Directory for summary.json and CSV tables.
    #[arg(long, value_name = "PATH", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for sweep grids (default: all cores).
    #[arg(long, value_name = "N")]
    jobs: Option<NonZeroUsize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::LzValidate(a) => (CommandKind::LzValidate, a),
        Command::Crossing(a) => (CommandKind::Crossing, a),
        Command::Ratchet(a) => (CommandKind::Ratchet, a),
        Command::Sweep(a) => (CommandKind::Sweep, a),
        Command::Mutate(a) => (CommandKind::Mutate, a),
    };
    let opts = RunOptions {
        config: args.config,
        out_dir: args.out_dir,
        jobs: args.jobs,
    };
    match run(kind, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
