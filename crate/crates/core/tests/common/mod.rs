//! Fixed-step RK4 oracle, independent of the adaptive integrator under test.

use num_complex::Complex64 as C64;
use ratchet_core::{RatchetDrive, RatchetModel, TwoLevelDrive};

fn rhs(drive: &RatchetDrive, t: f64, y: [C64; 2]) -> [C64; 2] {
    let rho11 = y[0].norm_sqr();
    let rho22 = y[1].norm_sqr();
    let (d1, d2) = drive.diagonals(t, rho11, rho22);
    let j = drive.coupling();
    let h0 = d1 * y[0] + j * y[1];
    let h1 = j * y[0] + d2 * y[1];
    [C64::new(h0.im, -h0.re), C64::new(h1.im, -h1.re)]
}

pub fn rk4_step(drive: &RatchetDrive, t: f64, y: [C64; 2], h: f64) -> [C64; 2] {
    let k1 = rhs(drive, t, y);
    let y2 = [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]];
    let k2 = rhs(drive, t + 0.5 * h, y2);
    let y3 = [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]];
    let k3 = rhs(drive, t + 0.5 * h, y3);
    let y4 = [y[0] + h * k3[0], y[1] + h * k3[1]];
    let k4 = rhs(drive, t + h, y4);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

pub struct Rk4TwoStage {
    pub switch_time: f64,
    pub p_final: f64,
    pub p_peak: f64,
}

/// Forward run from state 1 with in-step trigger location by bisection on
/// sub-integrations, then continuation with the armed model.
pub fn rk4_two_stage(
    model: &RatchetModel,
    horizon: f64,
    threshold: f64,
    dt: f64,
) -> Rk4TwoStage {
    let drive = RatchetDrive::new(model);
    let mut y = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut t = 0.0;
    let mut peak: f64 = 0.0;
    let mut switch_time = None;
    while t < horizon {
        let h = dt.min(horizon - t);
        let ynew = rk4_step(&drive, t, y, h);
        if ynew[1].norm_sqr() >= threshold {
            let (mut lo, mut hi) = (0.0f64, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if rk4_step(&drive, t, y, mid)[1].norm_sqr() >= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            y = rk4_step(&drive, t, y, hi);
            t += hi;
            switch_time = Some(t);
            break;
        }
        y = ynew;
        peak = peak.max(y[1].norm_sqr());
        t += h;
    }
    let switch_time = switch_time.expect("rk4 trigger must fire");
    let armed = model.with_vibron2_switch_on(switch_time);
    let armed_drive = RatchetDrive::new(&armed);
    let mut pk = peak.max(y[1].norm_sqr());
    while t < horizon {
        let h = dt.min(horizon - t);
        y = rk4_step(&armed_drive, t, y, h);
        pk = pk.max(y[1].norm_sqr());
        t += h;
    }
    Rk4TwoStage {
        switch_time,
        p_final: y[1].norm_sqr(),
        p_peak: pk,
    }
}

/// Reverse probe from a fresh state 2 at the switch moment; returns the
/// final and peak state-1 populations over five slow periods.
pub fn rk4_reverse(model: &RatchetModel, switch_time: f64, dt: f64) -> (f64, f64) {
    let armed = model.with_vibron2_switch_on(switch_time);
    let drive = RatchetDrive::new(&armed);
    let end = switch_time + 5.0 * armed.max_period();
    let mut y = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let mut t = switch_time;
    let mut peak: f64 = 0.0;
    while t < end {
        let h = dt.min(end - t);
        y = rk4_step(&drive, t, y, h);
        peak = peak.max(y[0].norm_sqr());
        t += h;
    }
    (y[0].norm_sqr(), peak)
}
