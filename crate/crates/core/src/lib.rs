//! Two-level quantum ratchet driven by classical vibron trajectories.
//!
//! The model is a pair of electronic levels coupled by a constant tunneling
//! matrix element whose diagonal energies follow vibron coordinates, weighted
//! by the instantaneous level populations (a nonlinear feedback term). The
//! crate provides the model types, an adaptive Schrodinger integrator for the
//! resulting nonlinear flow, Landau-Zener per-passage estimates, level
//! crossing solvability analysis, and the composite numerical experiments
//! built from those pieces.

pub mod crossing;
pub mod dynamics;
pub mod experiments;
pub mod landau_zener;
pub mod model;
pub mod reference;

pub use crossing::{
    direct_crossing, direct_margin_analytic, reverse_crossing, CrossingError, CrossingReport,
    CrossingRoot, TimeWindow,
};
pub use dynamics::{
    detect_markov_moment, evolve, run_two_stage, DynamicsError, GeneratorSample, IntegratorConfig,
    LinearSweep, RatchetDrive, Trajectory, TwoLevelDrive, TwoStageRun,
};
pub use experiments::{
    measure_direct, measure_reverse, mutation_experiment, optimal_regime_search,
    ratchet_experiment, single_vibron_nonparallel, validate_landau_zener, DirectMeasurement,
    ExperimentError, LzComparison, MutationArm, MutationReport, RatchetOutcome,
    ReverseMeasurement, SingleVibronReport, SweepCell, SweepReport, TransitionReport,
};
pub use landau_zener::{
    lz_estimate, per_passage_estimate, LzError, LzEstimate, LzParams, PerPassageEstimate,
    RatchetMove,
};
pub use model::{
    vibron_value, vibron_velocity, wavenumber_to_omega, ModelError, RatchetModel, StateVector,
    UnitSystem, VibronAnsatz, VibronProjection, NORM_TOL,
};
