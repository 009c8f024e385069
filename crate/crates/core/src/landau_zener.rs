//! Analytic avoided-crossing transition estimates.
//!
//! For diagonals swept linearly through a crossing, d1 = u t and d2 = v t
//! with constant coupling J, the asymptotic probability of staying on the
//! initial diabatic level is exp(-2 pi gamma) with gamma = J^2 / |u - v|.
//! The same formula gives a per-passage estimate for the feedback ratchet:
//! with the population collapsed onto one level the other diagonal is pinned
//! near zero, so locally only one diagonal moves and |u - v| becomes the
//! local slope of the active diagonal.

use serde::Serialize;
use thiserror::Error;

use crate::model::RatchetModel;

#[derive(Debug, Error, PartialEq)]
pub enum LzError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("coupling must be >= 0, got {value}")]
    NegativeCoupling { value: f64 },
}

fn check_finite(name: &'static str, value: f64) -> Result<(), LzError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(LzError::NonFinite { name, value })
    }
}

/// Linear-sweep crossing parameters: d1 = slope1 * t, d2 = slope2 * t,
/// constant off-diagonal coupling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LzParams {
    pub coupling: f64,
    pub slope1: f64,
    pub slope2: f64,
}

/// Analytic crossing outcome. `degenerate` marks a vanishing relative slope,
/// where the sweep picture breaks down and the adiabatic limit (certain
/// transition) is reported instead.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LzEstimate {
    /// gamma = J^2 / |slope1 - slope2|.
    pub exponent: f64,
    /// exp(-2 pi gamma): probability of remaining on the initial level.
    pub stay_probability: f64,
    /// 1 - exp(-2 pi gamma), computed via expm1 so small exponents survive.
    pub transition_probability: f64,
    pub degenerate: bool,
}

/// Slopes below this fraction of their natural scale count as a tangency.
const DEGENERATE_REL_TOL: f64 = 1e-9;

fn estimate_from(coupling: f64, relative_slope: f64, slope_scale: f64) -> LzEstimate {
    let degenerate = relative_slope <= DEGENERATE_REL_TOL * slope_scale;
    if coupling == 0.0 {
        return LzEstimate {
            exponent: 0.0,
            stay_probability: 1.0,
            transition_probability: 0.0,
            degenerate,
        };
    }
    if degenerate {
        return LzEstimate {
            exponent: if relative_slope == 0.0 {
                f64::INFINITY
            } else {
                coupling * coupling / relative_slope
            },
            stay_probability: 0.0,
            transition_probability: 1.0,
            degenerate: true,
        };
    }
    let gamma = coupling * coupling / relative_slope;
    let stay = (-2.0 * std::f64::consts::PI * gamma).exp();
    let transition = -(-2.0 * std::f64::consts::PI * gamma).exp_m1();
    LzEstimate {
        exponent: gamma,
        stay_probability: stay,
        transition_probability: transition,
        degenerate: false,
    }
}

/// Transition estimate for a linear two-sided sweep. Symmetric under
/// exchanging the two slopes.
pub fn lz_estimate(params: &LzParams) -> Result<LzEstimate, LzError> {
    check_finite("coupling", params.coupling)?;
    check_finite("slope1", params.slope1)?;
    check_finite("slope2", params.slope2)?;
    if params.coupling < 0.0 {
        return Err(LzError::NegativeCoupling {
            value: params.coupling,
        });
    }
    Ok(estimate_from(
        params.coupling,
        (params.slope1 - params.slope2).abs(),
        params.slope1.abs().max(params.slope2.abs()),
    ))
}

/// Which collapsed configuration carries the passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RatchetMove {
    /// Population sits on level 1; the first diagonal sweeps, driven by
    /// vibron 1 alone.
    Direct,
    /// Population sits on level 2; the second diagonal sweeps, driven by
    /// both vibrons.
    Reverse,
}

/// Single-passage estimate at one crossing of the collapsed feedback system.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerPassageEstimate {
    pub crossing_time: f64,
    /// |d/dt| of the active diagonal's bare projection at the crossing.
    pub slope: f64,
    pub exponent: f64,
    pub probability: f64,
    /// Zero local slope: the crossing is a tangency, not a sweep.
    pub degenerate: bool,
}

/// Per-passage transition estimate for the collapsed feedback picture at a
/// crossing time found by the solvability analysis.
pub fn per_passage_estimate(
    model: &RatchetModel,
    mv: RatchetMove,
    crossing_time: f64,
) -> Result<PerPassageEstimate, LzError> {
    check_finite("crossing_time", crossing_time)?;
    let velocity_bound = |p: &crate::model::VibronProjection| p.amplitude.abs() * p.omega;
    let (slope, scale) = match mv {
        RatchetMove::Direct => {
            let p = model.vibron1_on_h1();
            (p.velocity(crossing_time), velocity_bound(&p))
        }
        RatchetMove::Reverse => {
            let p1 = model.vibron1_on_h2();
            let p2 = model.vibron2_on_h2();
            let v = p1.velocity(crossing_time)
                + p2.as_ref().map_or(0.0, |p| p.velocity(crossing_time));
            let s = velocity_bound(&p1) + p2.as_ref().map_or(0.0, velocity_bound);
            (v, s)
        }
    };
    let slope = slope.abs();
    let est = estimate_from(model.coupling(), slope, scale);
    Ok(PerPassageEstimate {
        crossing_time,
        slope,
        exponent: est.exponent,
        probability: est.transition_probability,
        degenerate: est.degenerate,
    })
}
