//! Command-line driver for the two-level vibron ratchet.
//!
//! The binary reads a TOML run configuration, executes one of the numeric
//! experiments from the core crate, and writes a `summary.json` plus CSV
//! tables into an output directory. Exit codes: 0 success, 2 configuration
//! error (unreadable file, parse error, invalid field), 3 numerical failure
//! (integration or experiment error), 4 output I/O failure. The resolved
//! configuration is echoed into the summary with every unit converted to
//! rad/fs and every default filled in, so re-running the tool on that echo
//! reproduces the artifacts byte for byte.

pub mod commands;
pub mod config;
pub mod output;

use std::num::NonZeroUsize;
use std::path::PathBuf;

use thiserror::Error;

pub use commands::CommandKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Numerical(#[from] ratchet_core::ExperimentError),
    #[error("cannot serialize results: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code this error maps to.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Serialize(_) | CliError::Write { .. } => 4,
        }
    }
}

pub struct RunOptions {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub jobs: Option<NonZeroUsize>,
}

/// Loads the config, runs the command, writes artifacts, prints the paths
/// and the headline line.
pub fn run(kind: CommandKind, opts: &RunOptions) -> Result<(), CliError> {
    if let Some(jobs) = opts.jobs {
        // Only effective once per process; later calls keep the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.get())
            .build_global();
    }
    let resolved = config::load(&opts.config)?.resolve()?;
    let out = commands::execute(kind, &resolved)?;
    let summary = output::Summary {
        versions: output::Versions {
            tool: env!("CARGO_PKG_VERSION"),
            fixture: ratchet_core::reference::FIXTURE_VERSION,
        },
        command: kind.name(),
        config: &resolved.config,
        results: out.results,
    };
    let paths = output::write_artifacts(&opts.out_dir, &summary, &out.tables)?;
    for path in &paths {
        println!("wrote {}", path.display());
    }
    println!("{}", out.headline);
    Ok(())
}
