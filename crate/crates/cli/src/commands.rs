//! One function per subcommand: run the experiment, shape the results.
//!
//! Each command returns its results as a JSON value, the CSV tables it
//! wants written, and a one-line headline for stdout. Serialization and
//! file layout live in [`crate::output`].

use ratchet_core::experiments::REVERSE_WINDOW_PERIODS;
use ratchet_core::{
    detect_markov_moment, direct_crossing, evolve, mutation_experiment, optimal_regime_search,
    per_passage_estimate, ratchet_experiment, reverse_crossing, validate_landau_zener,
    ExperimentError, PerPassageEstimate, RatchetDrive, RatchetModel, RatchetMove, StateVector,
    TimeWindow,
};
use serde_json::json;

use crate::config::Resolved;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    LzValidate,
    Crossing,
    Ratchet,
    Sweep,
    Mutate,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::LzValidate => "lz-validate",
            CommandKind::Crossing => "crossing",
            CommandKind::Ratchet => "ratchet",
            CommandKind::Sweep => "sweep",
            CommandKind::Mutate => "mutate",
        }
    }
}

pub struct CommandOutput {
    pub results: serde_json::Value,
    pub tables: Vec<(&'static str, String)>,
    pub headline: String,
}

pub fn execute(kind: CommandKind, r: &Resolved) -> Result<CommandOutput, CliError> {
    match kind {
        CommandKind::Simulate => simulate(r),
        CommandKind::LzValidate => lz_validate(r),
        CommandKind::Crossing => crossing(r),
        CommandKind::Ratchet => ratchet(r),
        CommandKind::Sweep => sweep(r),
        CommandKind::Mutate => mutate(r),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into())
}

/// Plain integration of the model as configured. The population trigger is
/// not armed here (that is the ratchet command's job); a configured vibron2
/// only moves if its switch_on is set explicitly. The threshold crossing
/// reported is detected after the fact on the recorded trajectory.
fn simulate(r: &Resolved) -> Result<CommandOutput, CliError> {
    let end = r.start + r.horizon;
    let drive = RatchetDrive::new(&r.model);
    let traj = evolve(&drive, StateVector::state1(), r.start, end, &r.integrator)
        .map_err(ExperimentError::from)?;
    let crossing = detect_markov_moment(&traj, r.threshold, r.model.coupling());
    let last = traj.final_state();
    let results = json!({
        "window": { "start": r.start, "end": end },
        "rho11_final": last.rho11(),
        "rho22_final": last.rho22(),
        "threshold": r.threshold,
        "threshold_crossing": crossing,
        "max_norm_error": traj.max_norm_error(),
        "accepted_steps": traj.accepted_steps(),
        "rejected_steps": traj.rejected_steps(),
    });
    let headline = format!(
        "p_direct={} p_reverse=n/a t2={}",
        last.rho22(),
        fmt_opt(crossing)
    );
    Ok(CommandOutput {
        results,
        tables: vec![("trajectory.csv", crate::output::trajectory_table(&traj))],
        headline,
    })
}

fn lz_validate(r: &Resolved) -> Result<CommandOutput, CliError> {
    let comparisons = validate_landau_zener(&r.gammas)?;
    let max_rel_error = comparisons
        .iter()
        .map(|c| c.rel_error)
        .fold(0.0_f64, f64::max);
    let mut csv = String::from("gamma,p_numeric,p_analytic,rel_error\n");
    for c in &comparisons {
        use std::fmt::Write as _;
        writeln!(
            csv,
            "{:.15e},{:.15e},{:.15e},{:.15e}",
            c.gamma, c.numeric, c.analytic, c.rel_error
        )
        .expect("string write");
    }
    let results = json!({
        "comparisons": comparisons,
        "max_rel_error": max_rel_error,
    });
    let headline = format!(
        "max_rel_error={max_rel_error} gammas={}",
        comparisons.len()
    );
    Ok(CommandOutput {
        results,
        tables: vec![("lz_validation.csv", csv)],
        headline,
    })
}

fn passages(
    model: &RatchetModel,
    direction: RatchetMove,
    roots: &[ratchet_core::CrossingRoot],
) -> Result<Vec<PerPassageEstimate>, ExperimentError> {
    roots
        .iter()
        .map(|root| per_passage_estimate(model, direction, root.time).map_err(ExperimentError::from))
        .collect()
}

/// Crossing solvability without any integration: does the forward condition
/// have roots over the window, and does the reverse condition once vibron2
/// is armed at the configured switch_time?
fn crossing(r: &Resolved) -> Result<CommandOutput, CliError> {
    let window =
        TimeWindow::new(r.start, r.start + r.horizon).map_err(ExperimentError::from)?;
    let direct = direct_crossing(&r.model, window).map_err(ExperimentError::from)?;
    let direct_passages = passages(&r.model, RatchetMove::Direct, &direct.roots)?;

    let reverse = match r.model.vibron2() {
        None => None,
        Some(_) => {
            let armed = r.model.with_vibron2_switch_on(r.switch_time);
            let end = r.switch_time + REVERSE_WINDOW_PERIODS * armed.max_period();
            let rw = TimeWindow::new(r.switch_time, end).map_err(ExperimentError::from)?;
            let report = reverse_crossing(&armed, rw).map_err(ExperimentError::from)?;
            let ps = passages(&armed, RatchetMove::Reverse, &report.roots)?;
            Some(json!({
                "switch_time": r.switch_time,
                "report": report,
                "passages": ps,
            }))
        }
    };

    let reverse_solvable = reverse
        .as_ref()
        .map(|v| v["report"]["solvable"].to_string())
        .unwrap_or_else(|| "n/a".into());
    let headline = format!(
        "direct_solvable={} direct_roots={} reverse_solvable={}",
        direct.solvable,
        direct.roots.len(),
        reverse_solvable
    );
    let results = json!({
        "direct": { "report": direct, "passages": direct_passages },
        "reverse": reverse,
    });
    Ok(CommandOutput {
        results,
        tables: vec![],
        headline,
    })
}

fn ratchet(r: &Resolved) -> Result<CommandOutput, CliError> {
    let outcome = ratchet_experiment(&r.model, r.start, r.horizon, r.threshold, &r.integrator)?;
    let results = json!({
        "report": outcome.report,
        "direct_norm_error": outcome.direct.trajectory.max_norm_error(),
        "reverse_norm_error": outcome.reverse.trajectory.max_norm_error(),
    });
    let headline = format!(
        "p_direct={} p_reverse={} t2={}",
        outcome.report.p_direct, outcome.report.p_reverse, outcome.report.switch_time
    );
    Ok(CommandOutput {
        results,
        tables: vec![
            (
                "direct.csv",
                crate::output::trajectory_table(&outcome.direct.trajectory),
            ),
            (
                "reverse.csv",
                crate::output::trajectory_table(&outcome.reverse.trajectory),
            ),
        ],
        headline,
    })
}

fn sweep(r: &Resolved) -> Result<CommandOutput, CliError> {
    let report = optimal_regime_search(
        &r.model,
        &r.couplings,
        &r.amplitude_factors,
        r.start,
        r.horizon,
        r.threshold,
        &r.integrator,
    )?;
    let headline = match report.best() {
        Some(best) => format!(
            "p_direct={} p_reverse_peak={} t2={} best_coupling={} best_factor={}",
            best.p_direct,
            best.p_reverse_peak,
            fmt_opt(best.switch_time),
            best.coupling,
            best.amplitude_factor
        ),
        None => "p_direct=n/a p_reverse_peak=n/a t2=n/a (no cell engaged)".into(),
    };
    let csv = crate::output::sweep_table(&report);
    let results = json!({ "report": report });
    Ok(CommandOutput {
        results,
        tables: vec![("sweep.csv", csv)],
        headline,
    })
}

/// Robustness probes around the configured point: the full ratchet first
/// (for the baseline and its trajectories), then the shrunken-drive arm and
/// the second-vibron knockout.
fn mutate(r: &Resolved) -> Result<CommandOutput, CliError> {
    let outcome = ratchet_experiment(&r.model, r.start, r.horizon, r.threshold, &r.integrator)?;
    let report = mutation_experiment(
        &r.model,
        r.start,
        r.horizon,
        r.threshold,
        r.amplitude_factor,
        &r.integrator,
    )?;
    let headline = format!(
        "p_direct={} p_reverse={} t2={} perturbed_peak={} knockout_direct={}",
        report.baseline.p_direct,
        report.baseline.p_reverse,
        report.baseline.switch_time,
        report.perturbed.direct.p_peak,
        report.without_second.direct.p_final
    );
    let results = json!({ "report": report });
    Ok(CommandOutput {
        results,
        tables: vec![
            (
                "direct.csv",
                crate::output::trajectory_table(&outcome.direct.trajectory),
            ),
            (
                "reverse.csv",
                crate::output::trajectory_table(&outcome.reverse.trajectory),
            ),
        ],
        headline,
    })
}
