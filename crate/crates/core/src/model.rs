//! Model state: two-level amplitudes, switched-cosine vibron trajectories, and
//! the coupled ratchet model built from them.
//!
//! Conventions: hbar = 1, time in fs, energies/frequencies in rad/fs. Vibron
//! coordinates and the coupling vectors live in a configurable d-dimensional
//! real space; only projections of vibron trajectories onto the coupling
//! vectors enter the dynamics.

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

/// Speed of light in cm/fs.
pub const SPEED_OF_LIGHT_CM_PER_FS: f64 = 2.997_924_58e-5;

/// Tolerance on |norm^2 - 1| accepted by [`StateVector::new`].
pub const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("state norm^2 deviates from 1 by {norm_error:e} (tolerance {tolerance:e})")]
    NotNormalized { norm_error: f64, tolerance: f64 },
    #[error("cannot normalize a zero state vector")]
    ZeroNorm,
    #[error("vectors must share one dimension >= 1, got {left} and {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vectors must be non-empty")]
    EmptyVector,
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("coupling must be >= 0, got {value}")]
    NegativeCoupling { value: f64 },
    #[error("vibron frequency must be > 0, got {value}")]
    InvalidFrequency { value: f64 },
    #[error("wavenumber must be >= 0, got {value}")]
    NegativeWavenumber { value: f64 },
}

fn ensure_finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

fn ensure_finite_slice(name: &'static str, values: &[f64]) -> Result<(), ModelError> {
    if values.is_empty() {
        return Err(ModelError::EmptyVector);
    }
    for &v in values {
        ensure_finite(name, v)?;
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// units

/// Conversion constants between spectroscopic and internal units.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct UnitSystem {
    /// Multiply a wavenumber in cm^-1 by this to get rad/fs (2*pi*c).
    pub wavenumber_to_angular: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            wavenumber_to_angular: 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_FS,
        }
    }
}

impl UnitSystem {
    pub fn to_angular(&self, wavenumber: f64) -> f64 {
        wavenumber * self.wavenumber_to_angular
    }
}

/// cm^-1 -> rad/fs. Rejects negative or non-finite input.
pub fn wavenumber_to_omega(wavenumber: f64) -> Result<f64, ModelError> {
    ensure_finite("wavenumber", wavenumber)?;
    if wavenumber < 0.0 {
        return Err(ModelError::NegativeWavenumber { value: wavenumber });
    }
    Ok(UnitSystem::default().to_angular(wavenumber))
}

// ---------------------------------------------------------------------------
// state

/// Normalized two-level amplitude pair (c1, c2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateVector {
    c1: C64,
    c2: C64,
}

impl StateVector {
    /// Accepts amplitudes whose squared norm is within [`NORM_TOL`] of 1.
    pub fn new(c1: C64, c2: C64) -> Result<Self, ModelError> {
        let s = Self { c1, c2 };
        let err = s.norm_error();
        if !err.is_finite() || err > NORM_TOL {
            return Err(ModelError::NotNormalized {
                norm_error: err,
                tolerance: NORM_TOL,
            });
        }
        Ok(s)
    }

    /// Rescales arbitrary amplitudes to unit norm.
    pub fn from_unnormalized(c1: C64, c2: C64) -> Result<Self, ModelError> {
        let n2 = c1.norm_sqr() + c2.norm_sqr();
        if !n2.is_finite() || n2 == 0.0 {
            return Err(ModelError::ZeroNorm);
        }
        let n = n2.sqrt();
        Ok(Self {
            c1: c1 / n,
            c2: c2 / n,
        })
    }

    /// No normalization check; used by the integrator, which tracks norm
    /// drift explicitly instead of renormalizing.
    pub(crate) fn new_unchecked(c1: C64, c2: C64) -> Self {
        Self { c1, c2 }
    }

    /// Basis state |1> (donor).
    pub fn state1() -> Self {
        Self {
            c1: C64::new(1.0, 0.0),
            c2: C64::new(0.0, 0.0),
        }
    }

    /// Basis state |2> (acceptor).
    pub fn state2() -> Self {
        Self {
            c1: C64::new(0.0, 0.0),
            c2: C64::new(1.0, 0.0),
        }
    }

    pub fn c1(&self) -> C64 {
        self.c1
    }

    pub fn c2(&self) -> C64 {
        self.c2
    }

    /// Population of |1>.
    pub fn rho11(&self) -> f64 {
        self.c1.norm_sqr()
    }

    /// Population of |2>.
    pub fn rho22(&self) -> f64 {
        self.c2.norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c1.norm_sqr() + self.c2.norm_sqr()
    }

    /// |norm^2 - 1|.
    pub fn norm_error(&self) -> f64 {
        (self.norm_sqr() - 1.0).abs()
    }
}

// ---------------------------------------------------------------------------
// vibron

/// Classical vibron trajectory: q(t) = offset for t < t_on, and
/// offset + direction * (cos(omega*(t - t_on)) - 1) for t >= t_on.
///
/// Value and first derivative are continuous at t_on. `switch_on = None`
/// models a vibron that has not (yet) been generated: q(t) = offset for all t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VibronAnsatz {
    offset: Vec<f64>,
    direction: Vec<f64>,
    omega: f64,   // rad/fs
    switch_on: Option<f64>, // fs
}

impl VibronAnsatz {
    pub fn new(
        offset: Vec<f64>,
        direction: Vec<f64>,
        omega: f64,
        switch_on: Option<f64>,
    ) -> Result<Self, ModelError> {
        ensure_finite_slice("vibron offset", &offset)?;
        ensure_finite_slice("vibron direction", &direction)?;
        if offset.len() != direction.len() {
            return Err(ModelError::DimensionMismatch {
                left: offset.len(),
                right: direction.len(),
            });
        }
        ensure_finite("vibron omega", omega)?;
        if omega <= 0.0 {
            return Err(ModelError::InvalidFrequency { value: omega });
        }
        if let Some(t) = switch_on {
            ensure_finite("vibron switch_on", t)?;
        }
        Ok(Self {
            offset,
            direction,
            omega,
            switch_on,
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn switch_on(&self) -> Option<f64> {
        self.switch_on
    }

    /// 2*pi/omega, fs.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }

    pub fn with_switch_on(&self, t_on: f64) -> Self {
        Self {
            switch_on: Some(t_on),
            ..self.clone()
        }
    }

    pub fn with_direction_scaled(&self, factor: f64) -> Self {
        Self {
            direction: self.direction.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Scalar projection onto a coupling vector; the form the dynamics needs.
    pub fn project(&self, onto: &[f64]) -> VibronProjection {
        debug_assert_eq!(onto.len(), self.dim());
        VibronProjection {
            offset: dot(onto, &self.offset),
            amplitude: dot(onto, &self.direction),
            omega: self.omega,
            switch_on: self.switch_on,
        }
    }
}

/// q(t) as a d-vector.
pub fn vibron_value(v: &VibronAnsatz, t: f64) -> Vec<f64> {
    let phase = match v.switch_on {
        Some(t_on) if t >= t_on => v.omega * (t - t_on),
        _ => return v.offset.clone(),
    };
    let c = phase.cos() - 1.0;
    v.offset
        .iter()
        .zip(&v.direction)
        .map(|(q0, dir)| q0 + dir * c)
        .collect()
}

/// dq/dt as a d-vector.
pub fn vibron_velocity(v: &VibronAnsatz, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.dim()];
    if let Some(t_on) = v.switch_on {
        if t >= t_on {
            let s = -v.omega * (v.omega * (t - t_on)).sin();
            for (o, dir) in out.iter_mut().zip(&v.direction) {
                *o = dir * s;
            }
        }
    }
    out
}

/// Projection of a vibron trajectory onto a fixed coupling vector: a scalar
/// switched cosine, cheap enough for integrator and root-finder inner loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VibronProjection {
    /// h . offset, rad/fs
    pub offset: f64,
    /// h . direction, rad/fs
    pub amplitude: f64,
    pub omega: f64,
    pub switch_on: Option<f64>,
}

impl VibronProjection {
    /// h . q(t)
    pub fn value(&self, t: f64) -> f64 {
        match self.switch_on {
            Some(t_on) if t >= t_on => {
                self.offset + self.amplitude * ((self.omega * (t - t_on)).cos() - 1.0)
            }
            _ => self.offset,
        }
    }

    /// h . dq/dt
    pub fn velocity(&self, t: f64) -> f64 {
        match self.switch_on {
            Some(t_on) if t >= t_on => {
                -self.amplitude * self.omega * (self.omega * (t - t_on)).sin()
            }
            _ => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// model

/// Two-level system with population-feedback diagonal entries driven by one
/// or two vibron trajectories.
///
/// Generator (hbar = 1):
///   H11 = h1 . q1(t) * rho11,  H22 = h2 . (q1(t) + q2(t)) * rho22,  H12 = H21 = J,
/// with the population factors replaced by 1 when feedback is disabled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatchetModel {
    h1: Vec<f64>,
    h2: Vec<f64>,
    coupling: f64, // J, rad/fs
    vibron1: VibronAnsatz,
    vibron2: Option<VibronAnsatz>,
    feedback: bool,
    symmetric: bool,
}

impl RatchetModel {
    /// Symmetric coupling-vector choice h1 = h, h2 = -h.
    pub fn symmetric(
        h: Vec<f64>,
        coupling: f64,
        vibron1: VibronAnsatz,
        vibron2: Option<VibronAnsatz>,
    ) -> Result<Self, ModelError> {
        let h2 = h.iter().map(|x| -x).collect();
        let mut m = Self::general(h, h2, coupling, vibron1, vibron2)?;
        m.symmetric = true;
        Ok(m)
    }

    pub fn general(
        h1: Vec<f64>,
        h2: Vec<f64>,
        coupling: f64,
        vibron1: VibronAnsatz,
        vibron2: Option<VibronAnsatz>,
    ) -> Result<Self, ModelError> {
        ensure_finite_slice("h1", &h1)?;
        ensure_finite_slice("h2", &h2)?;
        ensure_finite("coupling", coupling)?;
        if coupling < 0.0 {
            return Err(ModelError::NegativeCoupling { value: coupling });
        }
        if h1.len() != h2.len() {
            return Err(ModelError::DimensionMismatch {
                left: h1.len(),
                right: h2.len(),
            });
        }
        if vibron1.dim() != h1.len() {
            return Err(ModelError::DimensionMismatch {
                left: h1.len(),
                right: vibron1.dim(),
            });
        }
        if let Some(v2) = &vibron2 {
            if v2.dim() != h1.len() {
                return Err(ModelError::DimensionMismatch {
                    left: h1.len(),
                    right: v2.dim(),
                });
            }
        }
        Ok(Self {
            h1,
            h2,
            coupling,
            vibron1,
            vibron2,
            feedback: true,
            symmetric: false,
        })
    }

    pub fn with_feedback(mut self, enabled: bool) -> Self {
        self.feedback = enabled;
        self
    }

    pub fn dim(&self) -> usize {
        self.h1.len()
    }

    pub fn h1(&self) -> &[f64] {
        &self.h1
    }

    pub fn h2(&self) -> &[f64] {
        &self.h2
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn vibron1(&self) -> &VibronAnsatz {
        &self.vibron1
    }

    pub fn vibron2(&self) -> Option<&VibronAnsatz> {
        self.vibron2.as_ref()
    }

    pub fn feedback_enabled(&self) -> bool {
        self.feedback
    }

    /// True when built through [`RatchetModel::symmetric`].
    pub fn symmetric_h(&self) -> bool {
        self.symmetric
    }

    /// Vibron 1 projected onto h1: drives the first diagonal.
    pub fn vibron1_on_h1(&self) -> VibronProjection {
        self.vibron1.project(&self.h1)
    }

    /// Vibron 1 projected onto h2: first part of the second diagonal.
    pub fn vibron1_on_h2(&self) -> VibronProjection {
        self.vibron1.project(&self.h2)
    }

    /// Vibron 2 projected onto h2: second part of the second diagonal.
    pub fn vibron2_on_h2(&self) -> Option<VibronProjection> {
        self.vibron2.as_ref().map(|v| v.project(&self.h2))
    }

    /// Feedback-weighted diagonal pair at time t for the given populations.
    pub fn diagonals(&self, t: f64, rho11: f64, rho22: f64) -> (f64, f64) {
        let q1_h1 = self.vibron1_on_h1().value(t);
        let q1_h2 = self.vibron1_on_h2().value(t);
        let q2_h2 = self.vibron2_on_h2().map_or(0.0, |p| p.value(t));
        let (w1, w2) = if self.feedback {
            (rho11, rho22)
        } else {
            (1.0, 1.0)
        };
        (q1_h1 * w1, (q1_h2 + q2_h2) * w2)
    }

    /// Shortest period among configured vibrons, fs.
    pub fn min_period(&self) -> f64 {
        let p1 = self.vibron1.period();
        match &self.vibron2 {
            Some(v2) => p1.min(v2.period()),
            None => p1,
        }
    }

    /// Longest period among configured vibrons, fs.
    pub fn max_period(&self) -> f64 {
        let p1 = self.vibron1.period();
        match &self.vibron2 {
            Some(v2) => p1.max(v2.period()),
            None => p1,
        }
    }

    /// Same model with a different coupling strength.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self, ModelError> {
        ensure_finite("coupling", coupling)?;
        if coupling < 0.0 {
            return Err(ModelError::NegativeCoupling { value: coupling });
        }
        Ok(Self {
            coupling,
            ..self.clone()
        })
    }

    /// Same model with vibron 1's direction scaled by `factor`.
    pub fn with_vibron1_scaled(&self, factor: f64) -> Self {
        Self {
            vibron1: self.vibron1.with_direction_scaled(factor),
            ..self.clone()
        }
    }

    /// Same model with vibron 2 switched on at `t2`.
    pub fn with_vibron2_switch_on(&self, t2: f64) -> Self {
        Self {
            vibron2: self.vibron2.as_ref().map(|v| v.with_switch_on(t2)),
            ..self.clone()
        }
    }

    /// Same model with vibron 2 removed.
    pub fn without_vibron2(&self) -> Self {
        Self {
            vibron2: None,
            ..self.clone()
        }
    }
}
