//! Composite numerical experiments built from the integrator, the crossing
//! analysis and the per-passage estimates: directed-transfer measurements,
//! their reverse counterparts, robustness mutations, coupling sweeps and the
//! linear-sweep validation of the analytic transition formula.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::crossing::{
    direct_crossing, reverse_crossing, CrossingError, CrossingReport, TimeWindow,
};
use crate::dynamics::{
    evolve, run_two_stage, DynamicsError, IntegratorConfig, LinearSweep, RatchetDrive, Trajectory,
};
use crate::landau_zener::{
    lz_estimate, per_passage_estimate, LzError, LzParams, PerPassageEstimate, RatchetMove,
};
use crate::model::{dot, ModelError, RatchetModel, StateVector};

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Crossing(#[from] CrossingError),
    #[error(transparent)]
    Lz(#[from] LzError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("population threshold {threshold} was not reached within {horizon} fs")]
    NoTransitionDetected { threshold: f64, horizon: f64 },
    #[error("experiment requires non-parallel coupling vectors")]
    NonParallelRequired,
    #[error("experiment requires a model without a second vibron")]
    SecondVibronForbidden,
    #[error("experiment requires a model with a second vibron")]
    SecondVibronRequired,
    #[error("{name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("sweep grid must be non-empty")]
    EmptyGrid,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ExperimentError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ExperimentError::InvalidParameter { name, value })
    }
}

// ---------------------------------------------------------------------------
// forward and reverse measurements

/// Forward transfer run: start on level 1, integrate with the population
/// trigger armed, and analyse the level-1 crossing condition over the window.
#[derive(Debug, Clone, Serialize)]
pub struct DirectMeasurement {
    pub trajectory: Trajectory,
    /// Moment the population threshold fired, if it did.
    pub switch_time: Option<f64>,
    /// rho22 at the end of the window.
    pub p_final: f64,
    /// Largest rho22 over the recorded trajectory.
    pub p_peak: f64,
    pub crossing: CrossingReport,
    pub passages: Vec<PerPassageEstimate>,
    /// Adiabatic splitting at the start of the run.
    pub gap_at_start: f64,
    /// Model as integrated after the trigger (second vibron armed).
    pub final_model: RatchetModel,
}

pub fn measure_direct(
    model: &RatchetModel,
    start: f64,
    horizon: f64,
    threshold: f64,
    cfg: &IntegratorConfig,
) -> Result<DirectMeasurement, ExperimentError> {
    check_positive("horizon", horizon)?;
    let end = start + horizon;
    let run = run_two_stage(model, StateVector::state1(), start, end, threshold, cfg)?;
    let window = TimeWindow::new(start, end)?;
    let crossing = direct_crossing(model, window)?;
    let passages = crossing
        .roots
        .iter()
        .map(|r| per_passage_estimate(&run.final_model, RatchetMove::Direct, r.time))
        .collect::<Result<Vec<_>, _>>()?;
    let p_final = run.trajectory.final_state().rho22();
    let p_peak = run
        .trajectory
        .states()
        .iter()
        .map(|s| s.rho22())
        .fold(0.0, f64::max);
    let gap_at_start = run.trajectory.generators()[0].gap;
    Ok(DirectMeasurement {
        trajectory: run.trajectory,
        switch_time: run.switch_time,
        p_final,
        p_peak,
        crossing,
        passages,
        gap_at_start,
        final_model: run.final_model,
    })
}

/// Return-transfer run: start fresh on level 2 at the switch moment and
/// watch for population coming back, over five of the slowest periods.
#[derive(Debug, Clone, Serialize)]
pub struct ReverseMeasurement {
    pub trajectory: Trajectory,
    /// rho11 at the end of the window.
    pub p_final: f64,
    /// Largest rho11 over the recorded trajectory.
    pub p_peak: f64,
    pub crossing: CrossingReport,
    pub passages: Vec<PerPassageEstimate>,
}

/// Number of slowest-vibron periods the reverse window covers.
pub const REVERSE_WINDOW_PERIODS: f64 = 5.0;

pub fn measure_reverse(
    armed: &RatchetModel,
    switch_time: f64,
    cfg: &IntegratorConfig,
) -> Result<ReverseMeasurement, ExperimentError> {
    if !switch_time.is_finite() {
        return Err(ExperimentError::InvalidParameter {
            name: "switch_time",
            value: switch_time,
        });
    }
    let end = switch_time + REVERSE_WINDOW_PERIODS * armed.max_period();
    let drive = RatchetDrive::new(armed);
    let traj = evolve(&drive, StateVector::state2(), switch_time, end, cfg)?;
    let window = TimeWindow::new(switch_time, end)?;
    let crossing = reverse_crossing(armed, window)?;
    let passages = crossing
        .roots
        .iter()
        .map(|r| per_passage_estimate(armed, RatchetMove::Reverse, r.time))
        .collect::<Result<Vec<_>, _>>()?;
    let p_final = traj.final_state().rho11();
    let p_peak = traj.states().iter().map(|s| s.rho11()).fold(0.0, f64::max);
    Ok(ReverseMeasurement {
        trajectory: traj,
        p_final,
        p_peak,
        crossing,
        passages,
    })
}

// ---------------------------------------------------------------------------
// the ratchet experiment

/// Summary of one forward-plus-reverse ratchet run.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionReport {
    /// Moment the population threshold fired and the second vibron came on.
    pub switch_time: f64,
    /// Adiabatic splitting at the start of the forward run.
    pub gap_at_start: f64,
    /// rho22 at the end of the forward window.
    pub p_direct: f64,
    pub p_direct_peak: f64,
    /// rho11 at the end of the reverse window.
    pub p_reverse: f64,
    pub p_reverse_peak: f64,
    /// p_direct minus the reverse peak: how much of the transferred
    /// population is genuinely locked in.
    pub irreversibility: f64,
    pub direct_crossing: CrossingReport,
    pub reverse_crossing: CrossingReport,
    pub direct_passages: Vec<PerPassageEstimate>,
    pub reverse_passages: Vec<PerPassageEstimate>,
}

/// Full result of [`ratchet_experiment`], trajectories included.
#[derive(Debug, Clone)]
pub struct RatchetOutcome {
    pub report: TransitionReport,
    pub direct: DirectMeasurement,
    pub reverse: ReverseMeasurement,
}

/// Runs the forward transfer, requires the trigger to fire, then probes the
/// return channel from the switch moment.
pub fn ratchet_experiment(
    model: &RatchetModel,
    start: f64,
    horizon: f64,
    threshold: f64,
    cfg: &IntegratorConfig,
) -> Result<RatchetOutcome, ExperimentError> {
    let direct = measure_direct(model, start, horizon, threshold, cfg)?;
    let switch_time = direct
        .switch_time
        .ok_or(ExperimentError::NoTransitionDetected { threshold, horizon })?;
    let reverse = measure_reverse(&direct.final_model, switch_time, cfg)?;
    let report = TransitionReport {
        switch_time,
        gap_at_start: direct.gap_at_start,
        p_direct: direct.p_final,
        p_direct_peak: direct.p_peak,
        p_reverse: reverse.p_final,
        p_reverse_peak: reverse.p_peak,
        irreversibility: direct.p_final - reverse.p_peak,
        direct_crossing: direct.crossing.clone(),
        reverse_crossing: reverse.crossing.clone(),
        direct_passages: direct.passages.clone(),
        reverse_passages: reverse.passages.clone(),
    };
    Ok(RatchetOutcome {
        report,
        direct,
        reverse,
    })
}

// ---------------------------------------------------------------------------
// mutation experiment

/// Lean summary of a forward probe.
#[derive(Debug, Clone, Serialize)]
pub struct DirectSummary {
    pub solvable: bool,
    pub margin: f64,
    pub switch_time: Option<f64>,
    pub p_final: f64,
    pub p_peak: f64,
}

impl From<&DirectMeasurement> for DirectSummary {
    fn from(m: &DirectMeasurement) -> Self {
        Self {
            solvable: m.crossing.solvable,
            margin: m.crossing.margin,
            switch_time: m.switch_time,
            p_final: m.p_final,
            p_peak: m.p_peak,
        }
    }
}

/// Lean summary of a reverse probe.
#[derive(Debug, Clone, Serialize)]
pub struct ReverseSummary {
    pub solvable: bool,
    pub margin: f64,
    pub p_final: f64,
    pub p_peak: f64,
}

impl From<&ReverseMeasurement> for ReverseSummary {
    fn from(m: &ReverseMeasurement) -> Self {
        Self {
            solvable: m.crossing.solvable,
            margin: m.crossing.margin,
            p_final: m.p_final,
            p_peak: m.p_peak,
        }
    }
}

/// One mutated variant: its forward probe, and the reverse probe when the
/// variant still produced a switch moment.
#[derive(Debug, Clone, Serialize)]
pub struct MutationArm {
    pub direct: DirectSummary,
    pub reverse: Option<ReverseSummary>,
}

/// Robustness check around a working ratchet: shrink the first vibron's
/// amplitude below the crossing threshold, and knock out the second vibron.
#[derive(Debug, Clone, Serialize)]
pub struct MutationReport {
    pub baseline: TransitionReport,
    /// Factor applied to vibron 1's direction in the perturbed arm.
    pub amplitude_factor: f64,
    pub perturbed: MutationArm,
    pub without_second: MutationArm,
}

pub fn mutation_experiment(
    model: &RatchetModel,
    start: f64,
    horizon: f64,
    threshold: f64,
    amplitude_factor: f64,
    cfg: &IntegratorConfig,
) -> Result<MutationReport, ExperimentError> {
    check_positive("amplitude_factor", amplitude_factor)?;
    if model.vibron2().is_none() {
        return Err(ExperimentError::SecondVibronRequired);
    }
    let baseline = ratchet_experiment(model, start, horizon, threshold, cfg)?;

    let perturbed_model = model.with_vibron1_scaled(amplitude_factor);
    let perturbed_direct = measure_direct(&perturbed_model, start, horizon, threshold, cfg)?;
    let perturbed_reverse = match perturbed_direct.switch_time {
        Some(t2) => Some(ReverseSummary::from(&measure_reverse(
            &perturbed_direct.final_model,
            t2,
            cfg,
        )?)),
        None => None,
    };
    let perturbed = MutationArm {
        direct: DirectSummary::from(&perturbed_direct),
        reverse: perturbed_reverse,
    };

    let knockout_model = model.without_vibron2();
    let knockout_direct = measure_direct(&knockout_model, start, horizon, threshold, cfg)?;
    let knockout_reverse = match knockout_direct.switch_time {
        Some(t2) => Some(ReverseSummary::from(&measure_reverse(
            &knockout_model,
            t2,
            cfg,
        )?)),
        None => None,
    };
    let without_second = MutationArm {
        direct: DirectSummary::from(&knockout_direct),
        reverse: knockout_reverse,
    };

    Ok(MutationReport {
        baseline: baseline.report,
        amplitude_factor,
        perturbed,
        without_second,
    })
}

// ---------------------------------------------------------------------------
// single-vibron, non-parallel coupling vectors

/// Directionality from one vibron alone: with non-parallel coupling vectors
/// the two crossing conditions probe different projections of the same
/// trajectory, so one can be solvable while the other is not.
#[derive(Debug, Clone, Serialize)]
pub struct SingleVibronReport {
    /// Crossing condition of level 1 (projection onto h1).
    pub first_condition: CrossingReport,
    /// Crossing condition of level 2 (projection onto h2).
    pub second_condition: CrossingReport,
    /// Forward run from level 1: rho22 at the end / its peak.
    pub forward_final: f64,
    pub forward_peak: f64,
    /// Backward run from level 2: rho11 at the end / its peak.
    pub backward_final: f64,
    pub backward_peak: f64,
}

pub fn single_vibron_nonparallel(
    model: &RatchetModel,
    start: f64,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<SingleVibronReport, ExperimentError> {
    check_positive("horizon", horizon)?;
    if model.vibron2().is_some() {
        return Err(ExperimentError::SecondVibronForbidden);
    }
    let h1 = model.h1();
    let h2 = model.h2();
    let cross = dot(h1, h2);
    let n1 = dot(h1, h1);
    let n2 = dot(h2, h2);
    if cross * cross >= (1.0 - 1e-12) * n1 * n2 {
        return Err(ExperimentError::NonParallelRequired);
    }
    let end = start + horizon;
    let window = TimeWindow::new(start, end)?;
    let first_condition = direct_crossing(model, window)?;
    let second_condition = reverse_crossing(model, window)?;
    let drive = RatchetDrive::new(model);
    let forward = evolve(&drive, StateVector::state1(), start, end, cfg)?;
    let backward = evolve(&drive, StateVector::state2(), start, end, cfg)?;
    Ok(SingleVibronReport {
        first_condition,
        second_condition,
        forward_final: forward.final_state().rho22(),
        forward_peak: forward.states().iter().map(|s| s.rho22()).fold(0.0, f64::max),
        backward_final: backward.final_state().rho11(),
        backward_peak: backward.states().iter().map(|s| s.rho11()).fold(0.0, f64::max),
    })
}

// ---------------------------------------------------------------------------
// regime sweep

/// One grid cell of the regime sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub coupling: f64,
    pub amplitude_factor: f64,
    /// The population trigger fired within the horizon.
    pub engaged: bool,
    pub switch_time: Option<f64>,
    pub p_direct: f64,
    pub p_reverse_peak: f64,
    pub irreversibility: f64,
    pub direct_solvable: bool,
    pub reverse_solvable: bool,
}

/// Grid scan over coupling strength and first-vibron amplitude. Cells are
/// stored row-major: index = coupling_index * amplitude_factors.len() +
/// factor_index.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub couplings: Vec<f64>,
    pub amplitude_factors: Vec<f64>,
    pub cells: Vec<SweepCell>,
    /// Row-major index of the engaged cell with the largest
    /// irreversibility; ties resolve to the earliest index.
    pub best_index: Option<usize>,
}

impl SweepReport {
    pub fn cell(&self, coupling_index: usize, factor_index: usize) -> &SweepCell {
        &self.cells[coupling_index * self.amplitude_factors.len() + factor_index]
    }

    pub fn best(&self) -> Option<&SweepCell> {
        self.best_index.map(|i| &self.cells[i])
    }
}

pub fn optimal_regime_search(
    model: &RatchetModel,
    couplings: &[f64],
    amplitude_factors: &[f64],
    start: f64,
    horizon: f64,
    threshold: f64,
    cfg: &IntegratorConfig,
) -> Result<SweepReport, ExperimentError> {
    if couplings.is_empty() || amplitude_factors.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    let params: Vec<(f64, f64)> = couplings
        .iter()
        .flat_map(|&j| amplitude_factors.iter().map(move |&f| (j, f)))
        .collect();
    let cells: Vec<SweepCell> = params
        .par_iter()
        .map(|&(j, factor)| -> Result<SweepCell, ExperimentError> {
            let variant = model.with_coupling(j)?.with_vibron1_scaled(factor);
            let direct = measure_direct(&variant, start, horizon, threshold, cfg)?;
            let cell = match direct.switch_time {
                Some(t2) => {
                    let reverse = measure_reverse(&direct.final_model, t2, cfg)?;
                    SweepCell {
                        coupling: j,
                        amplitude_factor: factor,
                        engaged: true,
                        switch_time: Some(t2),
                        p_direct: direct.p_final,
                        p_reverse_peak: reverse.p_peak,
                        irreversibility: direct.p_final - reverse.p_peak,
                        direct_solvable: direct.crossing.solvable,
                        reverse_solvable: reverse.crossing.solvable,
                    }
                }
                None => SweepCell {
                    coupling: j,
                    amplitude_factor: factor,
                    engaged: false,
                    switch_time: None,
                    p_direct: direct.p_final,
                    p_reverse_peak: 0.0,
                    irreversibility: 0.0,
                    direct_solvable: direct.crossing.solvable,
                    reverse_solvable: false,
                },
            };
            Ok(cell)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best_index = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.engaged)
        .max_by(|(ia, a), (ib, b)| {
            a.irreversibility
                .total_cmp(&b.irreversibility)
                .then(ib.cmp(ia)) // earlier index wins ties
        })
        .map(|(i, _)| i);
    Ok(SweepReport {
        couplings: couplings.to_vec(),
        amplitude_factors: amplitude_factors.to_vec(),
        cells,
        best_index,
    })
}

// ---------------------------------------------------------------------------
// linear-sweep validation of the analytic transition formula

/// Analytic-versus-numeric comparison at one sweep exponent.
#[derive(Debug, Clone, Serialize)]
pub struct LzComparison {
    pub gamma: f64,
    pub coupling: f64,
    /// The sweep runs over [-half_window, half_window], fs.
    pub half_window: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Integrates the linear sweep d1 = t, d2 = -t with J chosen so that
/// J^2 / |u - v| equals each requested gamma, and compares the numeric
/// transition probability against the analytic formula.
pub fn validate_landau_zener(gammas: &[f64]) -> Result<Vec<LzComparison>, ExperimentError> {
    if gammas.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    gammas
        .par_iter()
        .map(|&gamma| -> Result<LzComparison, ExperimentError> {
            check_positive("gamma", gamma)?;
            let slope_diff = 2.0; // u = +1, v = -1
            let coupling = (gamma * slope_diff).sqrt();
            // window wide enough that the asymptotic formula applies: far
            // outside both the coupling zone J/|u-v| and the crossing zone
            // 1/sqrt(|u-v|)
            let half_window = (25.0 / slope_diff.sqrt()).max(15.0 * coupling);
            let sweep = LinearSweep {
                slope1: 1.0,
                slope2: -1.0,
                coupling,
            };
            // the asymptotic formula describes the adiabatic channels: the
            // incoming diabatic level is the lower adiabatic branch before
            // the crossing and the transition target is the lower branch
            // after it. Starting in |1> at finite -T would miss the O(J/T)
            // dressing, so integrate branch to branch instead.
            let lower_branch = |t: f64| -> (f64, f64) {
                let (d1, d2) = (t, -t);
                let delta = 0.5 * (d1 - d2);
                let lambda = -(delta * delta + coupling * coupling).sqrt();
                let (v1, v2) = (coupling, lambda - d1);
                let n = v1.hypot(v2);
                (v1 / n, v2 / n)
            };
            let (a1, a2) = lower_branch(-half_window);
            let initial = StateVector::new(C64::new(a1, 0.0), C64::new(a2, 0.0))?;
            let cfg = IntegratorConfig {
                record_stride: half_window / 4000.0,
                ..Default::default()
            };
            let traj = evolve(&sweep, initial, -half_window, half_window, &cfg)?;
            // the branch population still rings around its asymptote past
            // the crossing; average the tail to cancel the oscillation
            let tail_from = 0.6 * half_window;
            let (sum, count) = traj
                .times()
                .iter()
                .zip(traj.states())
                .filter(|(t, _)| **t >= tail_from)
                .fold((0.0, 0usize), |(s, n), (&t, st)| {
                    let (v1, v2) = lower_branch(t);
                    let amp = st.c1() * v1 + st.c2() * v2;
                    (s + amp.norm_sqr(), n + 1)
                });
            let numeric = sum / count as f64;
            let analytic = lz_estimate(&LzParams {
                coupling,
                slope1: 1.0,
                slope2: -1.0,
            })?
            .transition_probability;
            Ok(LzComparison {
                gamma,
                coupling,
                half_window,
                analytic,
                numeric,
                rel_error: (numeric - analytic).abs() / analytic,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VibronAnsatz;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn flat_drive_model(j: f64) -> RatchetModel {
        // zero offset and zero amplitude: diagonals vanish, pure two-level
        // oscillation at frequency J
        let v1 = VibronAnsatz::new(vec![0.0], vec![0.0], 0.02, Some(0.0)).unwrap();
        RatchetModel::symmetric(vec![1.0], j, v1, None).unwrap()
    }

    #[test]
    fn direct_measurement_on_flat_drive() {
        let j = 0.05;
        let model = flat_drive_model(j);
        let cfg = IntegratorConfig::for_model(&model);
        let m = measure_direct(&model, 0.0, 120.0, 0.5, &cfg).unwrap();
        // rho22 = sin^2(J t) hits 1/2 at pi/(4 J)
        let expect = std::f64::consts::PI / (4.0 * j);
        assert_abs_diff_eq!(m.switch_time.unwrap(), expect, epsilon = 1e-6);
        assert_relative_eq!(m.gap_at_start, 2.0 * j, max_relative = 1e-12);
        assert!(m.p_peak > 0.99);
    }

    #[test]
    fn no_transition_when_uncoupled() {
        let model = flat_drive_model(0.0);
        let cfg = IntegratorConfig::for_model(&model);
        let err = ratchet_experiment(&model, 0.0, 200.0, 0.5, &cfg).unwrap_err();
        assert!(matches!(err, ExperimentError::NoTransitionDetected { .. }));
    }

    #[test]
    fn mutation_requires_second_vibron() {
        let model = flat_drive_model(0.05);
        let cfg = IntegratorConfig::for_model(&model);
        let err = mutation_experiment(&model, 0.0, 100.0, 0.5, 0.5, &cfg).unwrap_err();
        assert_eq!(err, ExperimentError::SecondVibronRequired);
    }

    #[test]
    fn nonparallel_rejects_parallel_vectors() {
        let v1 = VibronAnsatz::new(vec![1.0, 0.0], vec![0.7, 0.5], 0.05, Some(0.0)).unwrap();
        // symmetric construction gives h2 = -h1: parallel
        let model = RatchetModel::symmetric(vec![1.0, 0.0], 0.05, v1.clone(), None).unwrap();
        let cfg = IntegratorConfig::for_model(&model);
        assert_eq!(
            single_vibron_nonparallel(&model, 0.0, 100.0, &cfg).unwrap_err(),
            ExperimentError::NonParallelRequired
        );
        // second vibron present is also rejected
        let v2 = VibronAnsatz::new(vec![0.0, 0.0], vec![0.1, 0.0], 0.01, None).unwrap();
        let with_v2 =
            RatchetModel::general(vec![1.0, 0.0], vec![-1.0, 1.0], 0.05, v1, Some(v2)).unwrap();
        assert_eq!(
            single_vibron_nonparallel(&with_v2, 0.0, 100.0, &cfg).unwrap_err(),
            ExperimentError::SecondVibronForbidden
        );
    }

    #[test]
    fn nonparallel_conditions_split() {
        // h1 sees a crossing (margin 0.4), h2 does not (margin -0.6)
        let omega = 0.05;
        let v1 = VibronAnsatz::new(vec![1.0, 0.0], vec![0.7, 0.5], omega, Some(0.0)).unwrap();
        let model =
            RatchetModel::general(vec![1.0, 0.0], vec![-1.0, 1.0], 0.002, v1, None).unwrap();
        let cfg = IntegratorConfig::for_model(&model);
        let horizon = 3.0 * 2.0 * std::f64::consts::PI / omega;
        let report = single_vibron_nonparallel(&model, 0.0, horizon, &cfg).unwrap();
        assert!(report.first_condition.solvable);
        assert_relative_eq!(report.first_condition.margin, 0.4, max_relative = 1e-9);
        assert!(!report.second_condition.solvable);
        assert_relative_eq!(report.second_condition.margin, -0.6, max_relative = 1e-9);
        assert!(report.forward_peak > report.backward_peak);
    }

    #[test]
    fn sweep_grid_is_ordered_and_deterministic() {
        let model = flat_drive_model(0.05);
        let cfg = IntegratorConfig::for_model(&model);
        let couplings = [0.02, 0.05];
        let factors = [1.0, 2.0];
        let a = optimal_regime_search(&model, &couplings, &factors, 0.0, 150.0, 0.5, &cfg)
            .unwrap();
        let b = optimal_regime_search(&model, &couplings, &factors, 0.0, 150.0, 0.5, &cfg)
            .unwrap();
        assert_eq!(a.cells.len(), 4);
        for (i, &j) in couplings.iter().enumerate() {
            for (k, &f) in factors.iter().enumerate() {
                let cell = a.cell(i, k);
                assert_eq!(cell.coupling, j);
                assert_eq!(cell.amplitude_factor, f);
            }
        }
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.p_direct, cb.p_direct);
            assert_eq!(ca.switch_time, cb.switch_time);
        }
        assert_eq!(a.best_index, b.best_index);
        assert!(a.best().unwrap().engaged);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let model = flat_drive_model(0.05);
        let cfg = IntegratorConfig::for_model(&model);
        assert_eq!(
            optimal_regime_search(&model, &[], &[1.0], 0.0, 10.0, 0.5, &cfg).unwrap_err(),
            ExperimentError::EmptyGrid
        );
    }

    #[test]
    fn sweep_formula_matches_numeric_integration() {
        let gammas = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
        let out = validate_landau_zener(&gammas).unwrap();
        assert_eq!(out.len(), gammas.len());
        for c in &out {
            assert_relative_eq!(
                c.analytic,
                -(-2.0 * std::f64::consts::PI * c.gamma).exp_m1(),
                max_relative = 1e-14
            );
            assert!(
                c.rel_error < 0.01,
                "gamma {}: rel error {} (analytic {}, numeric {})",
                c.gamma,
                c.rel_error,
                c.analytic,
                c.numeric
            );
        }
    }
}
