//! Artifact writing: the summary JSON and CSV tables.
//!
//! All writes happen here, after a command has finished computing, so a
//! failed run never leaves a half-written output directory behind.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ratchet_core::{SweepReport, Trajectory};
use serde::Serialize;

use crate::CliError;

/// Top-level shape of `summary.json`.
#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub versions: Versions,
    pub command: &'static str,
    /// Resolved configuration: all units rad/fs, all defaults filled.
    /// Feeding it back as a run file reproduces this run exactly.
    pub config: &'a crate::config::RunConfig,
    pub results: serde_json::Value,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub tool: &'static str,
    /// Version of the built-in reference parameter point.
    pub fixture: &'static str,
}

/// Renders a recorded trajectory as CSV, one row per record point.
pub fn trajectory_table(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 + traj.len() * 230);
    out.push_str("t,re_c1,im_c1,re_c2,im_c2,rho11,rho22,diag1,diag2,gap\n");
    for i in 0..traj.len() {
        let t = traj.times()[i];
        let s = &traj.states()[i];
        let g = &traj.generators()[i];
        writeln!(
            out,
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            t,
            s.c1().re,
            s.c1().im,
            s.c2().re,
            s.c2().im,
            s.rho11(),
            s.rho22(),
            g.diag1,
            g.diag2,
            g.gap,
        )
        .expect("string write");
    }
    out
}

/// Renders the sweep grid as CSV, one row per cell in row-major order.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::with_capacity(
        128 + report.cells.len() * 160,
    );
    out.push_str(
        "coupling,amplitude_factor,engaged,switch_time,p_direct,p_reverse_peak,irreversibility,direct_solvable,reverse_solvable\n",
    );
    for cell in &report.cells {
        let t2 = cell
            .switch_time
            .map(|t| format!("{t:.15e}"))
            .unwrap_or_default();
        writeln!(
            out,
            "{:.15e},{:.15e},{},{},{:.15e},{:.15e},{:.15e},{},{}",
            cell.coupling,
            cell.amplitude_factor,
            cell.engaged,
            t2,
            cell.p_direct,
            cell.p_reverse_peak,
            cell.irreversibility,
            cell.direct_solvable,
            cell.reverse_solvable,
        )
        .expect("string write");
    }
    out
}

/// Writes the summary and any tables under `out_dir`, creating it first.
/// Returns the paths written, summary first.
pub fn write_artifacts(
    out_dir: &Path,
    summary: &Summary<'_>,
    tables: &[(&'static str, String)],
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(|source| CliError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::with_capacity(1 + tables.len());
    let json = serde_json::to_string_pretty(summary)?;
    let path = out_dir.join("summary.json");
    fs::write(&path, json + "\n").map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })?;
    paths.push(path);
    for (name, content) in tables {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}
