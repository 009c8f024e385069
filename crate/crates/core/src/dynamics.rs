//! Schrodinger integration for the two-level feedback system.
//!
//! The flow is dy/dt = -i H(y, t) y with a real symmetric generator whose
//! diagonal may depend on the instantaneous populations, so the problem is
//! nonlinear and norm conservation is not enforced by the stepper. The
//! integrator is an adaptive Dormand-Prince 5(4) pair with FSAL and the
//! standard 4th-order dense interpolant; norm drift is tracked as an
//! accuracy diagnostic rather than corrected away.

use num_complex::Complex64 as C64;
use serde::Serialize;
use thiserror::Error;

use crate::model::{RatchetModel, StateVector, VibronProjection};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("integration window must satisfy t0 < t1, got [{t0}, {t1}]")]
    InvalidWindow { t0: f64, t1: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    InvalidTolerance { name: &'static str, value: f64 },
    #[error("threshold must lie in (0, 1], got {value}")]
    InvalidThreshold { value: f64 },
    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepSizeUnderflow { t: f64, step: f64 },
    #[error("norm drift {norm_error:e} at t = {t} exceeds guard {guard:e}")]
    NormDrift { t: f64, norm_error: f64, guard: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    ExcessiveWork { t: f64, max_steps: u64 },
}

/// Time-dependent two-level generator H = [[d1, J], [J, d2]] in rad/fs.
///
/// `diagonals` receives the instantaneous populations so feedback-weighted
/// drives can fold them in; population-independent drives ignore them.
pub trait TwoLevelDrive {
    fn coupling(&self) -> f64;
    fn diagonals(&self, t: f64, rho11: f64, rho22: f64) -> (f64, f64);

    /// Times in (t0, t1) where the generator has a derivative kink; the
    /// integrator restarts there instead of stepping across.
    fn breakpoints(&self, _t0: f64, _t1: f64) -> Vec<f64> {
        Vec::new()
    }
}

/// Ratchet generator with the vibron projections precomputed, so the
/// integrator inner loop works on scalars.
#[derive(Debug, Clone)]
pub struct RatchetDrive {
    on_h1: VibronProjection,
    on_h2: VibronProjection,
    second_on_h2: Option<VibronProjection>,
    coupling: f64,
    feedback: bool,
}

impl RatchetDrive {
    pub fn new(model: &RatchetModel) -> Self {
        Self {
            on_h1: model.vibron1_on_h1(),
            on_h2: model.vibron1_on_h2(),
            second_on_h2: model.vibron2_on_h2(),
            coupling: model.coupling(),
            feedback: model.feedback_enabled(),
        }
    }
}

impl TwoLevelDrive for RatchetDrive {
    fn coupling(&self) -> f64 {
        self.coupling
    }

    fn diagonals(&self, t: f64, rho11: f64, rho22: f64) -> (f64, f64) {
        let bare1 = self.on_h1.value(t);
        let bare2 = self.on_h2.value(t) + self.second_on_h2.map_or(0.0, |p| p.value(t));
        if self.feedback {
            (bare1 * rho11, bare2 * rho22)
        } else {
            (bare1, bare2)
        }
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut ts: Vec<f64> = [
            self.on_h1.switch_on,
            self.second_on_h2.and_then(|p| p.switch_on),
        ]
        .into_iter()
        .flatten()
        .filter(|&t| t > t0 && t < t1)
        .collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        ts
    }
}

/// Population-independent sweep d1 = slope1 * t, d2 = slope2 * t. The
/// textbook avoided-crossing problem the analytic transition formula solves.
#[derive(Debug, Clone, Copy)]
pub struct LinearSweep {
    pub slope1: f64,
    pub slope2: f64,
    pub coupling: f64,
}

impl TwoLevelDrive for LinearSweep {
    fn coupling(&self) -> f64 {
        self.coupling
    }

    fn diagonals(&self, t: f64, _rho11: f64, _rho22: f64) -> (f64, f64) {
        (self.slope1 * t, self.slope2 * t)
    }
}

// ---------------------------------------------------------------------------
// configuration and results

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Hard cap on the step size, fs. Infinite means tolerance-limited only.
    pub max_step: f64,
    /// Spacing of the uniform record grid, fs. Zero picks window/1000.
    pub record_stride: f64,
    /// Norm drift beyond this aborts the run as a hard failure.
    pub norm_guard: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: f64::INFINITY,
            record_stride: 0.0,
            norm_guard: 1e-6,
        }
    }
}

impl IntegratorConfig {
    /// Caps the step at 1/200 of the fastest vibron period so oscillatory
    /// drives are always resolved, and records on the same grid.
    pub fn for_model(model: &RatchetModel) -> Self {
        let cap = model.min_period() / 200.0;
        Self {
            max_step: cap,
            record_stride: cap,
            ..Self::default()
        }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_record_stride(mut self, stride: f64) -> Self {
        self.record_stride = stride;
        self
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        let positive_finite = |name, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(DynamicsError::InvalidTolerance { name, value })
            }
        };
        positive_finite("rel_tol", self.rel_tol)?;
        positive_finite("abs_tol", self.abs_tol)?;
        positive_finite("norm_guard", self.norm_guard)?;
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return Err(DynamicsError::InvalidTolerance {
                name: "max_step",
                value: self.max_step,
            });
        }
        if !self.record_stride.is_finite() || self.record_stride < 0.0 {
            return Err(DynamicsError::InvalidTolerance {
                name: "record_stride",
                value: self.record_stride,
            });
        }
        Ok(())
    }
}

/// Generator snapshot stored with each trajectory record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorSample {
    /// Feedback-weighted H11, rad/fs.
    pub diag1: f64,
    /// Feedback-weighted H22, rad/fs.
    pub diag2: f64,
    /// Coupling J, rad/fs.
    pub off_diag: f64,
    /// Instantaneous adiabatic splitting sqrt((d1 - d2)^2 + 4 J^2).
    pub gap: f64,
}

impl GeneratorSample {
    fn at<D: TwoLevelDrive>(drive: &D, t: f64, y: &[C64; 2]) -> Self {
        let (diag1, diag2) = drive.diagonals(t, y[0].norm_sqr(), y[1].norm_sqr());
        let j = drive.coupling();
        Self {
            diag1,
            diag2,
            off_diag: j,
            gap: ((diag1 - diag2).powi(2) + 4.0 * j * j).sqrt(),
        }
    }
}

/// Sampled solution: a shared strictly increasing time grid with the state
/// and generator snapshot at each point.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
    generators: Vec<GeneratorSample>,
    max_norm_error: f64,
    accepted_steps: u64,
    rejected_steps: u64,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            generators: Vec::new(),
            max_norm_error: 0.0,
            accepted_steps: 0,
            rejected_steps: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn generators(&self) -> &[GeneratorSample] {
        &self.generators
    }

    /// Largest |norm^2 - 1| seen at any accepted step of the run.
    pub fn max_norm_error(&self) -> f64 {
        self.max_norm_error
    }

    pub fn accepted_steps(&self) -> u64 {
        self.accepted_steps
    }

    pub fn rejected_steps(&self) -> u64 {
        self.rejected_steps
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one record")
    }

    pub fn final_state(&self) -> StateVector {
        *self.states.last().expect("trajectory has at least one record")
    }

    /// First record index with time >= t, if any.
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&ti| ti >= t)
    }

    fn push(&mut self, t: f64, y: [C64; 2], sample: GeneratorSample) {
        const TIME_EPS: f64 = 1e-9; // fs; records closer than this coalesce
        let state = StateVector::new_unchecked(y[0], y[1]);
        if let Some(&last) = self.times.last() {
            if t <= last + TIME_EPS {
                // segment joins revisit the boundary point; keep the exact
                // endpoint state pushed last
                let i = self.times.len() - 1;
                self.states[i] = state;
                self.generators[i] = sample;
                return;
            }
        }
        self.times.push(t);
        self.states.push(state);
        self.generators.push(sample);
    }
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const MAX_STEPS: u64 = 50_000_000;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

#[inline]
fn mul_neg_i(z: C64) -> C64 {
    C64::new(z.im, -z.re)
}

#[inline]
fn rhs<D: TwoLevelDrive>(drive: &D, t: f64, y: &[C64; 2]) -> [C64; 2] {
    let (d1, d2) = drive.diagonals(t, y[0].norm_sqr(), y[1].norm_sqr());
    let j = drive.coupling();
    [
        mul_neg_i(y[0] * d1 + y[1] * j),
        mul_neg_i(y[0] * j + y[1] * d2),
    ]
}

#[inline]
fn axpy(y: &[C64; 2], h: f64, terms: &[(f64, &[C64; 2])]) -> [C64; 2] {
    let mut out = *y;
    for &(c, k) in terms {
        let ch = c * h;
        out[0] += k[0] * ch;
        out[1] += k[1] * ch;
    }
    out
}

/// Continuous extension over one accepted step.
struct DenseOutput {
    t: f64,
    h: f64,
    rcont: [[C64; 2]; 5],
}

impl DenseOutput {
    fn build(t: f64, h: f64, y: &[C64; 2], y_new: &[C64; 2], k: &[[C64; 2]; 7]) -> Self {
        let mut rcont = [[C64::new(0.0, 0.0); 2]; 5];
        for i in 0..2 {
            let ydiff = y_new[i] - y[i];
            let bspl = k[0][i] * h - ydiff;
            rcont[0][i] = y[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - k[6][i] * h - bspl;
            rcont[4][i] = (k[0][i] * D1
                + k[2][i] * D3
                + k[3][i] * D4
                + k[4][i] * D5
                + k[5][i] * D6
                + k[6][i] * D7)
                * h;
        }
        Self { t, h, rcont }
    }

    fn eval(&self, time: f64) -> [C64; 2] {
        let theta = (time - self.t) / self.h;
        let one_m = 1.0 - theta;
        let mut out = [C64::new(0.0, 0.0); 2];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.rcont[0][i]
                + (self.rcont[1][i]
                    + (self.rcont[2][i]
                        + (self.rcont[3][i] + self.rcont[4][i] * one_m) * theta)
                        * one_m)
                    * theta;
        }
        out
    }

    fn rho22(&self, time: f64) -> f64 {
        self.eval(time)[1].norm_sqr()
    }
}

/// Hairer's starting-step heuristic.
fn initial_step<D: TwoLevelDrive>(
    drive: &D,
    t0: f64,
    y0: &[C64; 2],
    f0: &[C64; 2],
    span: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let sc = |y: f64| cfg.abs_tol + cfg.rel_tol * y.abs();
    let rms = |v: &[C64; 2], w: &[C64; 2]| {
        let mut s = 0.0;
        for i in 0..2 {
            s += (v[i].re / sc(w[i].re)).powi(2) + (v[i].im / sc(w[i].im)).powi(2);
        }
        (s / 4.0).sqrt()
    };
    let d0 = rms(y0, y0);
    let d1 = rms(f0, y0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = rhs(drive, t0 + h0, &y1);
    let df = [f1[0] - f0[0], f1[1] - f0[1]];
    let d2 = rms(&df, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Everything a caller needs to act on a threshold trigger: when it fired
/// and the interpolated state there.
struct Trigger {
    t: f64,
    y: [C64; 2],
}

struct SegmentOutcome {
    y_end: [C64; 2],
    trigger: Option<Trigger>,
}

/// Records on the grid origin + k * stride. Grid points are generated by
/// index so long runs cannot drift off the grid.
struct Recorder {
    origin: f64,
    stride: f64,
    next_index: u64,
}

impl Recorder {
    fn new(origin: f64, stride: f64) -> Self {
        Self {
            origin,
            stride,
            next_index: 0,
        }
    }

    fn next_time(&self) -> f64 {
        self.origin + self.next_index as f64 * self.stride
    }

    fn advance_past(&mut self, t: f64) {
        while self.next_time() <= t {
            self.next_index += 1;
        }
    }
}

/// Integrates one smooth segment [t0, t1], recording into `traj` and
/// stopping early if the population threshold event fires.
#[allow(clippy::too_many_arguments)]
fn integrate_segment<D: TwoLevelDrive>(
    drive: &D,
    t0: f64,
    t1: f64,
    y0: [C64; 2],
    cfg: &IntegratorConfig,
    recorder: &mut Recorder,
    traj: &mut Trajectory,
    threshold: Option<f64>,
) -> Result<SegmentOutcome, DynamicsError> {
    let mut t = t0;
    let mut y = y0;
    let mut f = rhs(drive, t, &y);

    traj.push(t, y, GeneratorSample::at(drive, t, &y));
    recorder.advance_past(t);

    let mut h = initial_step(drive, t, &y, &f, t1 - t0, cfg);
    let mut rejected_last = false;

    loop {
        if traj.accepted_steps + traj.rejected_steps >= MAX_STEPS {
            return Err(DynamicsError::ExcessiveWork {
                t,
                max_steps: MAX_STEPS,
            });
        }
        if h < f64::EPSILON * 1e3 * t.abs().max(1.0) {
            return Err(DynamicsError::StepSizeUnderflow { t, step: h });
        }
        let mut last = false;
        if t + h >= t1 {
            h = t1 - t;
            last = true;
        }

        let k1 = f;
        let k2 = rhs(drive, t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = rhs(drive, t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            drive,
            t + C4 * h,
            &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            drive,
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            drive,
            t + h,
            &axpy(
                &y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = rhs(drive, t + h, &y_new);

        let mut err = 0.0;
        for i in 0..2 {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * h;
            let sc_re = cfg.abs_tol + cfg.rel_tol * y[i].re.abs().max(y_new[i].re.abs());
            let sc_im = cfg.abs_tol + cfg.rel_tol * y[i].im.abs().max(y_new[i].im.abs());
            err += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
        }
        err = (err / 4.0).sqrt();

        if !err.is_finite() {
            return Err(DynamicsError::NonFiniteState { t });
        }

        if err > 1.0 {
            traj.rejected_steps += 1;
            rejected_last = true;
            let fac = (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            h *= fac.min(1.0);
            continue;
        }

        traj.accepted_steps += 1;
        let norm_err = (y_new[0].norm_sqr() + y_new[1].norm_sqr() - 1.0).abs();
        if norm_err > traj.max_norm_error {
            traj.max_norm_error = norm_err;
        }
        if norm_err > cfg.norm_guard {
            return Err(DynamicsError::NormDrift {
                t: t + h,
                norm_error: norm_err,
                guard: cfg.norm_guard,
            });
        }
        if !(y_new[0].is_finite() && y_new[1].is_finite()) {
            return Err(DynamicsError::NonFiniteState { t: t + h });
        }

        let k = [k1, k2, k3, k4, k5, k6, k7];
        let needs_dense = threshold.is_some() || recorder.next_time() < t + h;
        let dense = if needs_dense {
            Some(DenseOutput::build(t, h, &y, &y_new, &k))
        } else {
            None
        };

        // threshold event: population of level 2 first reaches the trigger
        if let (Some(thr), Some(dense)) = (threshold, &dense) {
            let trigger = locate_threshold(dense, t, h, &y_new, thr);
            if let Some(trigger) = trigger {
                while recorder.next_time() < trigger.t {
                    let tr = recorder.next_time();
                    let yr = dense.eval(tr);
                    traj.push(tr, yr, GeneratorSample::at(drive, tr, &yr));
                    recorder.next_index += 1;
                }
                traj.push(
                    trigger.t,
                    trigger.y,
                    GeneratorSample::at(drive, trigger.t, &trigger.y),
                );
                recorder.advance_past(trigger.t);
                return Ok(SegmentOutcome {
                    y_end: trigger.y,
                    trigger: Some(trigger),
                });
            }
        }

        if let Some(dense) = &dense {
            let end = t + h;
            while recorder.next_time() < end - 1e-12 * end.abs().max(1.0) {
                let tr = recorder.next_time();
                if tr > t {
                    let yr = dense.eval(tr);
                    traj.push(tr, yr, GeneratorSample::at(drive, tr, &yr));
                }
                recorder.next_index += 1;
            }
        }

        t += h;
        y = y_new;
        f = k7; // FSAL

        if last {
            traj.push(t, y, GeneratorSample::at(drive, t, &y));
            recorder.advance_past(t);
            return Ok(SegmentOutcome {
                y_end: y,
                trigger: None,
            });
        }

        let mut fac = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        if rejected_last {
            fac = fac.min(1.0);
            rejected_last = false;
        }
        h = (h * fac).min(cfg.max_step);
    }
}

/// Finds the earliest time in the step where rho22 reaches the threshold,
/// scanning the dense interpolant and bisecting the bracketing subinterval.
fn locate_threshold(
    dense: &DenseOutput,
    t: f64,
    h: f64,
    y_new: &[C64; 2],
    threshold: f64,
) -> Option<Trigger> {
    const SCAN: usize = 16;
    let g = |time: f64| dense.rho22(time) - threshold;
    let mut lo = t;
    let mut hi = None;
    for i in 1..=SCAN {
        let ti = if i == SCAN {
            t + h
        } else {
            t + h * i as f64 / SCAN as f64
        };
        let gi = if i == SCAN {
            y_new[1].norm_sqr() - threshold
        } else {
            g(ti)
        };
        if gi >= 0.0 {
            hi = Some(ti);
            break;
        }
        lo = ti;
    }
    let mut hi = hi?;
    for _ in 0..80 {
        if hi - lo <= f64::EPSILON * 4.0 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(Trigger {
        t: hi,
        y: dense.eval(hi),
    })
}

fn effective_stride(cfg: &IntegratorConfig, span: f64) -> f64 {
    if cfg.record_stride > 0.0 {
        cfg.record_stride
    } else {
        span / 1000.0
    }
}

/// Integrates the drive over [t0, t1] from `initial`, restarting at
/// generator kinks, and returns the sampled trajectory.
pub fn evolve<D: TwoLevelDrive>(
    drive: &D,
    initial: StateVector,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    cfg.validate()?;
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(DynamicsError::InvalidWindow { t0, t1 });
    }
    let mut traj = Trajectory::new();
    let mut recorder = Recorder::new(t0, effective_stride(cfg, t1 - t0));
    let mut y = [initial.c1(), initial.c2()];
    let mut t = t0;
    for stop in drive.breakpoints(t0, t1).into_iter().chain([t1]) {
        let out = integrate_segment(drive, t, stop, y, cfg, &mut recorder, &mut traj, None)?;
        y = out.y_end;
        t = stop;
    }
    Ok(traj)
}

/// Result of a staged run: the full trajectory and the moment the population
/// threshold fired, if it did.
#[derive(Debug, Clone)]
pub struct TwoStageRun {
    pub trajectory: Trajectory,
    /// Time at which rho22 first reached the threshold.
    pub switch_time: Option<f64>,
    /// Model actually integrated after the switch (second vibron armed).
    pub final_model: RatchetModel,
}

/// Evolves the model watching for the first time rho22 reaches `threshold`;
/// at that moment the second vibron is switched on and integration continues
/// with the updated drive. With `threshold = 1.0` the trigger never fires and
/// the result matches a plain `evolve` of the unmodified model exactly.
pub fn run_two_stage(
    model: &RatchetModel,
    initial: StateVector,
    t0: f64,
    t1: f64,
    threshold: f64,
    cfg: &IntegratorConfig,
) -> Result<TwoStageRun, DynamicsError> {
    cfg.validate()?;
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(DynamicsError::InvalidThreshold { value: threshold });
    }
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(DynamicsError::InvalidWindow { t0, t1 });
    }

    let mut traj = Trajectory::new();
    let mut recorder = Recorder::new(t0, effective_stride(cfg, t1 - t0));
    let drive = RatchetDrive::new(model);

    // trigger already satisfied at the start
    if initial.rho22() >= threshold {
        let armed = model.with_vibron2_switch_on(t0);
        let t2_drive = RatchetDrive::new(&armed);
        let mut y = [initial.c1(), initial.c2()];
        let mut t = t0;
        for stop in t2_drive.breakpoints(t0, t1).into_iter().chain([t1]) {
            let out =
                integrate_segment(&t2_drive, t, stop, y, cfg, &mut recorder, &mut traj, None)?;
            y = out.y_end;
            t = stop;
        }
        return Ok(TwoStageRun {
            trajectory: traj,
            switch_time: Some(t0),
            final_model: armed,
        });
    }

    let mut y = [initial.c1(), initial.c2()];
    let mut t = t0;
    let mut fired: Option<f64> = None;
    for stop in drive.breakpoints(t0, t1).into_iter().chain([t1]) {
        let out = integrate_segment(
            &drive,
            t,
            stop,
            y,
            cfg,
            &mut recorder,
            &mut traj,
            Some(threshold),
        )?;
        y = out.y_end;
        if let Some(trigger) = out.trigger {
            fired = Some(trigger.t);
            break;
        }
        t = stop;
    }

    let Some(t2) = fired else {
        return Ok(TwoStageRun {
            trajectory: traj,
            switch_time: None,
            final_model: model.clone(),
        });
    };

    let armed = model.with_vibron2_switch_on(t2);
    if t2 < t1 {
        let t2_drive = RatchetDrive::new(&armed);
        let mut tt = t2;
        for stop in t2_drive
            .breakpoints(t2, t1)
            .into_iter()
            .filter(|&b| b > t2)
            .chain([t1])
        {
            let out =
                integrate_segment(&t2_drive, tt, stop, y, cfg, &mut recorder, &mut traj, None)?;
            y = out.y_end;
            tt = stop;
        }
    }
    Ok(TwoStageRun {
        trajectory: traj,
        switch_time: Some(t2),
        final_model: armed,
    })
}

/// Refines the first threshold crossing of rho22 on a recorded trajectory.
///
/// Uses the exact population derivative d(rho22)/dt = 2 J Im(c1 conj(c2)) to
/// build a cubic Hermite interpolant between the bracketing records, then
/// bisects it. Returns the first record time if the trajectory starts at or
/// above the threshold, None if it never reaches it.
pub fn detect_markov_moment(traj: &Trajectory, threshold: f64, coupling: f64) -> Option<f64> {
    let times = traj.times();
    let states = traj.states();
    if times.is_empty() {
        return None;
    }
    if states[0].rho22() >= threshold {
        return Some(times[0]);
    }
    let idx = (1..times.len()).find(|&i| states[i].rho22() >= threshold)?;
    let (ta, tb) = (times[idx - 1], times[idx]);
    let dt = tb - ta;
    let rho_dot = |s: &StateVector| 2.0 * coupling * (s.c1() * s.c2().conj()).im;
    let p0 = states[idx - 1].rho22();
    let p1 = states[idx].rho22();
    let m0 = rho_dot(&states[idx - 1]) * dt;
    let m1 = rho_dot(&states[idx]) * dt;
    let hermite = |u: f64| {
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * p0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * p1
            + (u3 - u2) * m1
    };
    let g = |u: f64| hermite(u) - threshold;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        if hi - lo <= f64::EPSILON * 4.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(ta + hi * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VibronAnsatz;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rabi_drive(j: f64) -> LinearSweep {
        LinearSweep {
            slope1: 0.0,
            slope2: 0.0,
            coupling: j,
        }
    }

    fn sample_model(j: f64, feedback: bool) -> RatchetModel {
        let v1 = VibronAnsatz::new(vec![1.0], vec![0.55], 0.0217, Some(0.0)).unwrap();
        let v2 = VibronAnsatz::new(vec![0.0], vec![0.3], 0.0066, None).unwrap();
        RatchetModel::symmetric(vec![0.05], j, v1, Some(v2))
            .unwrap()
            .with_feedback(feedback)
    }

    #[test]
    fn resonant_oscillation_matches_analytic_law() {
        // constant degenerate diagonal: rho22(t) = sin^2(J t)
        let j = 0.05;
        let cfg = IntegratorConfig {
            max_step: 1.0,
            record_stride: 1.0,
            ..Default::default()
        };
        let traj = evolve(&rabi_drive(j), StateVector::state1(), 0.0, 120.0, &cfg).unwrap();
        for (t, s) in traj.times().iter().zip(traj.states()) {
            let expect = (j * t).sin().powi(2);
            assert_abs_diff_eq!(s.rho22(), expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_coupling_freezes_populations() {
        let model = sample_model(0.0, true);
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        let traj = evolve(&drive, StateVector::state1(), 0.0, 2000.0, &cfg).unwrap();
        for s in traj.states() {
            // no coupling: c2 stays exactly zero, rho11 moves only by norm drift
            assert_eq!(s.rho22(), 0.0);
            assert_abs_diff_eq!(s.rho11(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn norm_drift_stays_small_on_long_feedback_run() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        let traj = evolve(&drive, StateVector::state1(), 0.0, 5000.0, &cfg).unwrap();
        assert!(traj.max_norm_error() <= 1e-8, "drift {}", traj.max_norm_error());
        assert!(traj.accepted_steps() > 200);
    }

    #[test]
    fn tightening_tolerance_converges() {
        let model = sample_model(0.004, true);
        let loose = IntegratorConfig::for_model(&model).with_tolerances(1e-7, 1e-7);
        let tight = IntegratorConfig::for_model(&model).with_tolerances(1e-12, 1e-12);
        let drive = RatchetDrive::new(&model);
        let a = evolve(&drive, StateVector::state1(), 0.0, 1500.0, &loose).unwrap();
        let b = evolve(&drive, StateVector::state1(), 0.0, 1500.0, &tight).unwrap();
        let (sa, sb) = (a.final_state(), b.final_state());
        assert_abs_diff_eq!(sa.rho22(), sb.rho22(), epsilon = 1e-6);
        assert!((sa.c1() - sb.c1()).norm() < 1e-5);
    }

    #[test]
    fn dense_records_match_analytic_solution() {
        // force large steps so records come from the interpolant, not step ends
        let j = 0.02;
        let cfg = IntegratorConfig {
            record_stride: 0.7,
            ..Default::default()
        };
        let traj = evolve(&rabi_drive(j), StateVector::state1(), 0.0, 200.0, &cfg).unwrap();
        assert!(traj.accepted_steps() < 150);
        assert!(traj.len() > 280);
        for (t, s) in traj.times().iter().zip(traj.states()) {
            assert_abs_diff_eq!(s.rho22(), (j * t).sin().powi(2), epsilon = 1e-8);
        }
    }

    #[test]
    fn record_grid_is_uniform_and_covers_window() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        let traj = evolve(&drive, StateVector::state1(), 0.0, 800.0, &cfg).unwrap();
        assert_eq!(traj.times()[0], 0.0);
        assert_eq!(traj.final_time(), 800.0);
        for w in traj.times().windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] <= cfg.record_stride * 1.5 + 1e-9);
        }
    }

    #[test]
    fn breakpoint_restart_hits_switch_time_exactly() {
        let v1 = VibronAnsatz::new(vec![1.0], vec![0.5], 0.02, Some(137.25)).unwrap();
        let model = RatchetModel::symmetric(vec![0.05], 0.003, v1, None).unwrap();
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        let traj = evolve(&drive, StateVector::state1(), 0.0, 400.0, &cfg).unwrap();
        assert!(traj.times().contains(&137.25));
        assert!(traj.max_norm_error() <= 1e-8);
    }

    #[test]
    fn generator_samples_are_consistent() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        let traj = evolve(&drive, StateVector::state1(), 0.0, 600.0, &cfg).unwrap();
        for ((t, s), g) in traj.times().iter().zip(traj.states()).zip(traj.generators()) {
            let (d1, d2) = drive.diagonals(*t, s.rho11(), s.rho22());
            assert_abs_diff_eq!(g.diag1, d1, epsilon = 1e-12);
            assert_abs_diff_eq!(g.diag2, d2, epsilon = 1e-12);
            assert_abs_diff_eq!(
                g.gap,
                ((d1 - d2).powi(2) + 4.0 * 0.004f64 * 0.004).sqrt(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn markov_moment_matches_analytic_crossing() {
        // rho22 = sin^2(J t) reaches 1/2 at t = pi / (4 J)
        let j = 0.05;
        let cfg = IntegratorConfig {
            max_step: 1.0,
            record_stride: 1.0,
            ..Default::default()
        };
        let traj = evolve(&rabi_drive(j), StateVector::state1(), 0.0, 60.0, &cfg).unwrap();
        let t2 = detect_markov_moment(&traj, 0.5, j).unwrap();
        let expect = std::f64::consts::PI / (4.0 * j);
        assert_abs_diff_eq!(t2, expect, epsilon = 1e-6);
    }

    #[test]
    fn two_stage_trigger_agrees_with_post_hoc_detection() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let run = run_two_stage(&model, StateVector::state1(), 0.0, 4000.0, 0.3, &cfg).unwrap();
        let t2 = run.switch_time.expect("threshold should fire");
        let post = detect_markov_moment(&run.trajectory, 0.3, model.coupling()).unwrap();
        assert_abs_diff_eq!(t2, post, epsilon = 0.5);
        // the armed model carries the switch time
        let armed = run.final_model.vibron2().unwrap();
        assert_eq!(armed.switch_on(), Some(t2));
        // rho22 at the trigger record is at the threshold
        let i = run.trajectory.index_at_or_after(t2).unwrap();
        assert_abs_diff_eq!(run.trajectory.states()[i].rho22(), 0.3, epsilon = 1e-6);
    }

    #[test]
    fn unit_threshold_never_fires_and_matches_plain_evolve() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let run = run_two_stage(&model, StateVector::state1(), 0.0, 1500.0, 1.0, &cfg).unwrap();
        assert_eq!(run.switch_time, None);
        let drive = RatchetDrive::new(&model);
        let plain = evolve(&drive, StateVector::state1(), 0.0, 1500.0, &cfg).unwrap();
        assert_eq!(run.trajectory.times(), plain.times());
        for (a, b) in run.trajectory.states().iter().zip(plain.states()) {
            assert_eq!(a.c1(), b.c1());
            assert_eq!(a.c2(), b.c2());
        }
    }

    #[test]
    fn starting_above_threshold_fires_immediately() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let run = run_two_stage(&model, StateVector::state2(), 0.0, 500.0, 0.5, &cfg).unwrap();
        assert_eq!(run.switch_time, Some(0.0));
        assert_eq!(run.final_model.vibron2().unwrap().switch_on(), Some(0.0));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let model = sample_model(0.004, true);
        let cfg = IntegratorConfig::for_model(&model);
        let drive = RatchetDrive::new(&model);
        assert!(matches!(
            evolve(&drive, StateVector::state1(), 10.0, 10.0, &cfg),
            Err(DynamicsError::InvalidWindow { .. })
        ));
        let bad = IntegratorConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            evolve(&drive, StateVector::state1(), 0.0, 1.0, &bad),
            Err(DynamicsError::InvalidTolerance { .. })
        ));
        assert!(matches!(
            run_two_stage(&model, StateVector::state1(), 0.0, 1.0, 0.0, &cfg),
            Err(DynamicsError::InvalidThreshold { .. })
        ));
        assert!(matches!(
            run_two_stage(&model, StateVector::state1(), 0.0, 1.0, 1.5, &cfg),
            Err(DynamicsError::InvalidThreshold { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        // norm drift stays tiny and populations sum to one for random models
        #[test]
        fn norm_preserved_for_random_models(
            j in 0.0f64..0.05,
            q0 in 0.2f64..2.0,
            amp in -1.0f64..1.0,
            omega in 5e-3f64..5e-2,
            feedback in proptest::bool::ANY,
        ) {
            let v1 = VibronAnsatz::new(vec![q0], vec![amp], omega, Some(0.0)).unwrap();
            let model = RatchetModel::symmetric(vec![0.1], j, v1, None)
                .unwrap()
                .with_feedback(feedback);
            let cfg = IntegratorConfig::for_model(&model);
            let drive = RatchetDrive::new(&model);
            let traj = evolve(&drive, StateVector::state1(), 0.0, 300.0, &cfg).unwrap();
            // bound is looser than for physical-scale drives: the draw allows
            // diagonals far above the coupling scale, which costs phase error
            prop_assert!(traj.max_norm_error() < 5e-8);
            for w in traj.times().windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            let s = traj.final_state();
            prop_assert!((s.rho11() + s.rho22() - 1.0).abs() < 5e-8);
        }
    }
}
