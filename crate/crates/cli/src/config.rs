//! TOML run configuration: parsing, unit resolution, and defaults.
//!
//! A run file has a required `[model]` section plus optional `[integrator]`
//! and `[experiment]` sections. Every energy or frequency is a quantity
//! tagged with a unit, either `"cm-1"` (wavenumbers) or `"rad_per_fs"`
//! (angular frequency); resolution converts everything to rad/fs and fills
//! in every default, so the configuration echoed into `summary.json` is
//! closed: feeding it back as a new run file reproduces the run exactly,
//! bit for bit.
//!
//! Defaults: experiment start 0 fs, trigger threshold 0.5, horizon of 3
//! fast-vibron periods, mutation amplitude factor 0.4, sweep grid of
//! coupling times {1/2, 1, 3/2} crossed with amplitude factors
//! {0.4, 1.0, 1.1}, the six-point gamma grid below for sweep-law
//! validation, and integrator tolerances from the core defaults.

use std::fs;
use std::path::{Path, PathBuf};

use ratchet_core::{IntegratorConfig, ModelError, RatchetModel, UnitSystem, VibronAnsatz};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Adiabaticity parameters used when `experiment.gammas` is not given.
pub const DEFAULT_GAMMAS: [f64; 6] = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0];
/// Amplitude grid used when `experiment.amplitude_factors` is not given.
pub const DEFAULT_SWEEP_FACTORS: [f64; 3] = [0.4, 1.0, 1.1];
/// Shrink factor used when `experiment.amplitude_factor` is not given.
pub const DEFAULT_MUTATION_FACTOR: f64 = 0.4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config model: {0}")]
    Model(#[from] ModelError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn require(cond: bool, field: &str, reason: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(invalid(field, reason))
    }
}

// ---------------------------------------------------------------------------
// schema

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "cm-1")]
    Wavenumber,
    #[serde(rename = "rad_per_fs")]
    RadPerFs,
}

/// A scalar with an energy/frequency unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

/// A vector with a shared energy/frequency unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VecQuantity {
    pub values: Vec<f64>,
    pub unit: Unit,
}

fn angular(value: f64, unit: Unit) -> f64 {
    match unit {
        Unit::RadPerFs => value,
        // Sign-preserving, unlike the validating scalar helper in the core:
        // vector components may legitimately be negative.
        Unit::Wavenumber => UnitSystem::default().to_angular(value),
    }
}

impl Quantity {
    fn to_rad_per_fs(self, field: &str) -> Result<Quantity, ConfigError> {
        let value = angular(self.value, self.unit);
        require(value.is_finite(), field, "must be finite")?;
        Ok(Quantity {
            value,
            unit: Unit::RadPerFs,
        })
    }
}

impl VecQuantity {
    fn to_rad_per_fs(&self, field: &str) -> Result<VecQuantity, ConfigError> {
        let values: Vec<f64> = self.values.iter().map(|&v| angular(v, self.unit)).collect();
        require(values.iter().all(|v| v.is_finite()), field, "must be finite")?;
        Ok(VecQuantity {
            values,
            unit: Unit::RadPerFs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Symmetric coupling vectors: h1 = h, h2 = -h. Excludes h1/h2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<VecQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<VecQuantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<VecQuantity>,
    /// Off-diagonal tunneling matrix element J.
    pub coupling: Quantity,
    /// Weight the diagonal terms by the instantaneous populations.
    #[serde(default = "default_feedback")]
    pub feedback: bool,
    pub vibron1: VibronSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vibron2: Option<VibronSection>,
}

fn default_feedback() -> bool {
    true
}

/// One classical vibron trajectory q(t) = offset + direction * (cos(w (t -
/// t_on)) - 1). Offset and direction are dimensionless shape vectors; the
/// physical energy scale comes from the coupling vectors they project onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibronSection {
    pub offset: Vec<f64>,
    pub direction: Vec<f64>,
    pub frequency: Quantity,
    /// Moment the oscillation starts, fs. Omitted on vibron2 it stays
    /// parked at its offset until the population trigger arms it; omitted
    /// on vibron1 it defaults to 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_on: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Start of the forward window, fs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    /// Population on level 2 that fires the trigger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Forward window length in fast-vibron periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_periods: Option<f64>,
    /// Vibron-1 shrink factor for the mutation arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_factor: Option<f64>,
    /// Arming moment assumed by the crossing command's reverse analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_time: Option<f64>,
    /// Adiabaticity parameters for the sweep-law validation command.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    /// Coupling grid for the regime sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<VecQuantity>,
    /// Vibron-1 amplitude grid for the regime sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_factors: Option<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// loading and resolution

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let raw = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(toml::from_str(&raw)?)
}

/// A fully resolved run: the canonical config (all units rad/fs, all
/// defaults filled) next to the objects built from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: RatchetModel,
    pub integrator: IntegratorConfig,
    pub start: f64,
    pub threshold: f64,
    /// Forward window length, fs.
    pub horizon: f64,
    pub switch_time: f64,
    pub amplitude_factor: f64,
    pub gammas: Vec<f64>,
    pub couplings: Vec<f64>,
    pub amplitude_factors: Vec<f64>,
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let mut c = self.clone();

        // Units first, so the echoed config and every value below agree.
        if let Some(h) = &c.model.h {
            c.model.h = Some(h.to_rad_per_fs("model.h")?);
        }
        if let Some(h1) = &c.model.h1 {
            c.model.h1 = Some(h1.to_rad_per_fs("model.h1")?);
        }
        if let Some(h2) = &c.model.h2 {
            c.model.h2 = Some(h2.to_rad_per_fs("model.h2")?);
        }
        c.model.coupling = c.model.coupling.to_rad_per_fs("model.coupling")?;
        c.model.vibron1.frequency = c
            .model
            .vibron1
            .frequency
            .to_rad_per_fs("model.vibron1.frequency")?;
        c.model.vibron1.switch_on = Some(c.model.vibron1.switch_on.unwrap_or(0.0));
        if let Some(v2) = &mut c.model.vibron2 {
            v2.frequency = v2.frequency.to_rad_per_fs("model.vibron2.frequency")?;
        }

        let (h1, h2) = match (&c.model.h, &c.model.h1, &c.model.h2) {
            (Some(h), None, None) => (h.values.clone(), None),
            (None, Some(a), Some(b)) => (a.values.clone(), Some(b.values.clone())),
            (Some(_), _, _) => {
                return Err(invalid("model.h", "give either h alone or h1 with h2"))
            }
            _ => return Err(invalid("model", "give either h, or both h1 and h2")),
        };
        require(!h1.is_empty(), "model", "coupling vectors must be non-empty")?;

        let e = &mut c.experiment;
        let start = *e.start.get_or_insert(0.0);
        let threshold = *e.threshold.get_or_insert(0.5);
        let horizon_periods = *e.horizon_periods.get_or_insert(3.0);
        let amplitude_factor = *e.amplitude_factor.get_or_insert(DEFAULT_MUTATION_FACTOR);
        let switch_time = *e.switch_time.get_or_insert(start);
        let gammas = e.gammas.get_or_insert_with(|| DEFAULT_GAMMAS.to_vec()).clone();
        let j = c.model.coupling.value;
        let couplings_q = e.couplings.get_or_insert_with(|| VecQuantity {
            values: vec![0.5 * j, j, 1.5 * j],
            unit: Unit::RadPerFs,
        });
        *couplings_q = couplings_q.to_rad_per_fs("experiment.couplings")?;
        let couplings = couplings_q.values.clone();
        let amplitude_factors = e
            .amplitude_factors
            .get_or_insert_with(|| DEFAULT_SWEEP_FACTORS.to_vec())
            .clone();

        require(start.is_finite(), "experiment.start", "must be finite")?;
        require(
            threshold > 0.0 && threshold <= 1.0,
            "experiment.threshold",
            "must lie in (0, 1]",
        )?;
        require(
            horizon_periods.is_finite() && horizon_periods > 0.0,
            "experiment.horizon_periods",
            "must be positive",
        )?;
        require(
            amplitude_factor.is_finite() && amplitude_factor > 0.0,
            "experiment.amplitude_factor",
            "must be positive",
        )?;
        require(switch_time.is_finite(), "experiment.switch_time", "must be finite")?;
        require(
            !gammas.is_empty() && gammas.iter().all(|g| g.is_finite() && *g > 0.0),
            "experiment.gammas",
            "must be non-empty and positive",
        )?;
        require(
            !couplings.is_empty() && couplings.iter().all(|v| *v >= 0.0),
            "experiment.couplings",
            "must be non-empty and non-negative",
        )?;
        require(
            !amplitude_factors.is_empty()
                && amplitude_factors.iter().all(|f| f.is_finite() && *f > 0.0),
            "experiment.amplitude_factors",
            "must be non-empty and positive",
        )?;

        let i = &mut c.integrator;
        let defaults = IntegratorConfig::default();
        let rel_tol = *i.rel_tol.get_or_insert(defaults.rel_tol);
        let abs_tol = *i.abs_tol.get_or_insert(defaults.abs_tol);
        require(
            rel_tol.is_finite() && rel_tol > 0.0,
            "integrator.rel_tol",
            "must be positive",
        )?;
        require(
            abs_tol.is_finite() && abs_tol > 0.0,
            "integrator.abs_tol",
            "must be positive",
        )?;

        let vibron1 = build_vibron(&c.model.vibron1)?;
        let vibron2 = c.model.vibron2.as_ref().map(build_vibron).transpose()?;
        let model = match h2 {
            None => RatchetModel::symmetric(h1, j, vibron1, vibron2),
            Some(h2) => RatchetModel::general(h1, h2, j, vibron1, vibron2),
        }?
        .with_feedback(c.model.feedback);

        let integrator = IntegratorConfig::for_model(&model).with_tolerances(rel_tol, abs_tol);
        let horizon = horizon_periods * model.vibron1().period();

        Ok(Resolved {
            config: c,
            model,
            integrator,
            start,
            threshold,
            horizon,
            switch_time,
            amplitude_factor,
            gammas,
            couplings,
            amplitude_factors,
        })
    }
}

fn build_vibron(section: &VibronSection) -> Result<VibronAnsatz, ConfigError> {
    Ok(VibronAnsatz::new(
        section.offset.clone(),
        section.direction.clone(),
        section.frequency.value,
        section.switch_on,
    )?)
}
