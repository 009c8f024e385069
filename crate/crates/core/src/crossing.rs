//! Level-crossing solvability analysis for the collapsed feedback picture.
//!
//! With the population sitting on one level, the feedback zeroes the other
//! diagonal, so the levels cross exactly where the active diagonal's bare
//! projection vanishes. Two conditions matter:
//!
//! * direct (population on 1): f(t) = h1 . q1(t) = 0
//! * reverse (population on 2): g(t) = h2 . (q1(t) + q2(t)) = 0
//!
//! Both are finite sums of switched cosines, so roots are located by dense
//! scanning (a fixed number of samples per shortest period) with bisection at
//! sign changes and golden-section refinement of near-miss extrema, which
//! also catches tangencies and root pairs narrower than the scan grid.

use serde::Serialize;
use thiserror::Error;

use crate::model::{RatchetModel, VibronProjection};

#[derive(Debug, Error, PartialEq)]
pub enum CrossingError {
    #[error("window must satisfy start < end with finite bounds, got [{start}, {end}]")]
    InvalidWindow { start: f64, end: f64 },
}

/// Closed time interval the analysis runs over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    pub fn new(start: f64, end: f64) -> Result<Self, CrossingError> {
        if start.is_finite() && end.is_finite() && start < end {
            Ok(Self { start, end })
        } else {
            Err(CrossingError::InvalidWindow { start, end })
        }
    }

    pub fn span(&self) -> f64 {
        self.end - self.start
    }
}

/// One zero of the crossing condition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossingRoot {
    pub time: f64,
    /// Signed d/dt of the condition at the root, rad/fs^2.
    pub slope: f64,
    /// The condition touches zero without changing sign (or the slope is
    /// negligible against its natural scale).
    pub tangency: bool,
}

/// Outcome of scanning one crossing condition over a window.
#[derive(Debug, Clone, Serialize)]
pub struct CrossingReport {
    pub window: TimeWindow,
    /// At least one root lies in the window.
    pub solvable: bool,
    pub roots: Vec<CrossingRoot>,
    /// How deep the condition pushes through zero, oriented so that positive
    /// means it reaches the far side: -min over the window of sign * value,
    /// where sign is the side the condition starts on. Zero at a tangency,
    /// negative when the condition never reaches zero.
    pub margin: f64,
    /// Side the condition starts on: sign of its first nonzero value.
    pub orientation: f64,
}

/// Sum of projected vibron trajectories; all crossing conditions used by the
/// model take this shape.
#[derive(Debug, Clone)]
struct Condition {
    parts: Vec<VibronProjection>,
}

impl Condition {
    fn value(&self, t: f64) -> f64 {
        self.parts.iter().map(|p| p.value(t)).sum()
    }

    fn velocity(&self, t: f64) -> f64 {
        self.parts.iter().map(|p| p.velocity(t)).sum()
    }

    fn shortest_period(&self) -> f64 {
        let omega_max = self
            .parts
            .iter()
            .map(|p| p.omega)
            .fold(f64::MIN, f64::max);
        2.0 * std::f64::consts::PI / omega_max
    }

    fn velocity_bound(&self) -> f64 {
        self.parts.iter().map(|p| p.amplitude.abs() * p.omega).sum()
    }
}

/// Crossing condition for population resting on level 1.
pub fn direct_crossing(
    model: &RatchetModel,
    window: TimeWindow,
) -> Result<CrossingReport, CrossingError> {
    let cond = Condition {
        parts: vec![model.vibron1_on_h1()],
    };
    Ok(analyze(&cond, window))
}

/// Crossing condition for population resting on level 2; includes the second
/// vibron whenever the model carries one.
pub fn reverse_crossing(
    model: &RatchetModel,
    window: TimeWindow,
) -> Result<CrossingReport, CrossingError> {
    let mut parts = vec![model.vibron1_on_h2()];
    if let Some(p) = model.vibron2_on_h2() {
        parts.push(p);
    }
    let cond = Condition { parts };
    Ok(analyze(&cond, window))
}

/// Closed-form margin of the direct condition, valid when the window reaches
/// a vibron turning point past switch-on: the single-cosine projection
/// attains offset - 2 * amplitude there, so the oriented dip depth is
/// 2 * (oriented amplitude)+ - |offset|.
pub fn direct_margin_analytic(model: &RatchetModel) -> f64 {
    let p = model.vibron1_on_h1();
    if p.offset == 0.0 {
        return 0.0;
    }
    let oriented_amp = p.offset.signum() * p.amplitude;
    2.0 * oriented_amp.max(0.0) - p.offset.abs()
}

const SAMPLES_PER_PERIOD: usize = 400;
/// |value| below this fraction of the condition's scale counts as touching
/// zero when classifying a refined extremum.
const TANGENCY_REL_TOL: f64 = 1e-8;
/// Roots closer than this fraction of the shortest period merge.
const ROOT_MERGE_REL: f64 = 1e-6;

fn analyze(cond: &Condition, window: TimeWindow) -> CrossingReport {
    let span = window.span();
    let period = cond.shortest_period();
    let n = ((span / period * SAMPLES_PER_PERIOD as f64).ceil() as usize)
        .clamp(SAMPLES_PER_PERIOD, 4_000_000);
    let ts: Vec<f64> = (0..=n)
        .map(|i| window.start + span * i as f64 / n as f64)
        .collect();
    let gs: Vec<f64> = ts.iter().map(|&t| cond.value(t)).collect();

    let scale = gs.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    if scale == 0.0 {
        // identically zero condition: the levels are permanently crossed
        return CrossingReport {
            window,
            solvable: true,
            roots: vec![CrossingRoot {
                time: window.start,
                slope: 0.0,
                tangency: true,
            }],
            margin: 0.0,
            orientation: 0.0,
        };
    }
    let orientation = gs
        .iter()
        .find(|g| **g != 0.0)
        .map(|g| g.signum())
        .unwrap_or(0.0);
    let tangency_tol = TANGENCY_REL_TOL * scale;
    let vel_bound = cond.velocity_bound();

    let mut roots: Vec<CrossingRoot> = Vec::new();
    let mut push_root = |cond: &Condition, t: f64, tangency: bool| {
        let slope = cond.velocity(t);
        roots.push(CrossingRoot {
            time: t,
            slope,
            tangency: tangency || slope.abs() <= 1e-9 * vel_bound,
        });
    };

    // transversal roots: bisect every sign change of adjacent samples
    for i in 1..=n {
        if gs[i] == 0.0 {
            // grid point lands exactly on a root; classify by neighbours
            let left = gs[i - 1];
            let right = if i < n { gs[i + 1] } else { 0.0 };
            push_root(cond, ts[i], left * right > 0.0);
        } else if gs[i - 1] != 0.0 && gs[i - 1].signum() != gs[i].signum() {
            let t = bisect(|t| cond.value(t), ts[i - 1], ts[i]);
            push_root(cond, t, false);
        }
    }

    // near-miss extrema: refine toward zero, catching tangencies and root
    // pairs that fit between two samples
    for i in 1..n {
        let bracket_sign = gs[i - 1].signum();
        if bracket_sign == 0.0
            || gs[i].signum() != bracket_sign
            || gs[i + 1].signum() != bracket_sign
        {
            continue; // a sign change here was already bisected
        }
        let toward_zero = |t: f64| bracket_sign * cond.value(t);
        let is_extremum =
            toward_zero(ts[i]) < toward_zero(ts[i - 1]) && toward_zero(ts[i]) <= toward_zero(ts[i + 1]);
        if !is_extremum {
            continue;
        }
        let (t_star, v_star) = golden_min(&toward_zero, ts[i - 1], ts[i + 1]);
        if v_star < -tangency_tol {
            // dips through between samples: a pair of transversal roots
            let a = bisect(|t| cond.value(t), ts[i - 1], t_star);
            let b = bisect(|t| cond.value(t), t_star, ts[i + 1]);
            push_root(cond, a, false);
            push_root(cond, b, false);
        } else if v_star <= tangency_tol {
            push_root(cond, t_star, true);
        }
    }

    roots.sort_by(|a, b| a.time.total_cmp(&b.time));
    roots.dedup_by(|b, a| {
        if (b.time - a.time).abs() <= ROOT_MERGE_REL * period {
            a.tangency |= b.tangency;
            true
        } else {
            false
        }
    });

    // margin: depth of the deepest oriented dip, with every sampled local
    // minimum refined so the turning-point value is exact to refinement
    // accuracy, not grid accuracy
    let oriented = |t: f64| orientation * cond.value(t);
    let mut lowest = f64::INFINITY;
    for i in 0..=n {
        let p = orientation * gs[i];
        if p < lowest {
            lowest = p;
        }
        if i >= 1 && i < n {
            let (pm, p0, pp) = (orientation * gs[i - 1], orientation * gs[i], orientation * gs[i + 1]);
            if p0 < pm && p0 <= pp {
                let (_, v) = golden_min(&oriented, ts[i - 1], ts[i + 1]);
                if v < lowest {
                    lowest = v;
                }
            }
        }
    }

    CrossingReport {
        window,
        solvable: !roots.is_empty(),
        roots,
        margin: -lowest,
        orientation,
    }
}

/// Bisection to ~1e-12 relative on a bracketed sign change; returns the
/// midpoint of the final bracket.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    if fa == 0.0 {
        return a;
    }
    let sa = fa.signum();
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * b.abs().max(a.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sa {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Golden-section minimization on [a, b]; returns (argmin, min).
fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = 1e-11 * (b - a).abs().max(1e-12);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}
