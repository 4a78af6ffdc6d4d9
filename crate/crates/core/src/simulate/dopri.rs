// Dormand–Prince 5(4) with the standard fourth-order continuous extension
// and a PI step-size controller.
//
// Components flagged in `log_mask` hold `ln x` instead of `x`. Their error
// scale is `rtol + atol / x`, the image of `atol + rtol · x` under the log map.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{exp, log, powf, sqrt};

/// Largest error allowed per step on a logarithmic component, in log units.
const LOG_ERROR_CAP: f64 = 1e-3;

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

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - PI_BETA * 0.75;

/// Components below this are a hard rejection; those in `(-NEG_TOL, 0)` are
/// clamped to zero.
pub(crate) const NEG_TOL: f64 = 1e-12;

pub(crate) enum StepOutcome {
    Accepted { clamped: usize },
    Rejected,
}

#[derive(Debug)]
pub(crate) enum StepFailure {
    Underflow,
    NonFinite,
}

/// Integrator state for an autonomous system `y' = f(y)`. The field also
/// receives the current log mask.
pub(crate) struct Dopri5<F: FnMut(&[f64], &[bool], &mut [f64])> {
    f: F,
    rtol: f64,
    atol: f64,
    nonnegative: bool,
    log_mask: Vec<bool>,
    pub(crate) t: f64,
    pub(crate) y: Vec<f64>,
    pub(crate) t_old: f64,
    pub(crate) h: f64,
    h_used: f64,
    fac_old: f64,
    reject_streak: usize,
    nonfinite_streak: usize,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    cont: [Vec<f64>; 5],
    pub(crate) accepted: usize,
    pub(crate) rejected: usize,
}

impl<F: FnMut(&[f64], &[bool], &mut [f64])> Dopri5<F> {
    /// With `nonnegative`, steps that push a component below `-NEG_TOL` are
    /// rejected and smaller negative values are clamped to zero.
    pub(crate) fn new(mut f: F, y0: Vec<f64>, rtol: f64, atol: f64, nonnegative: bool) -> Self {
        let n = y0.len();
        let log_mask = vec![false; n];
        let mut k1 = vec![0.0; n];
        f(&y0, &log_mask, &mut k1);
        let mut s = Self {
            f,
            rtol,
            atol,
            nonnegative,
            log_mask,
            t: 0.0,
            t_old: 0.0,
            h: 0.0,
            h_used: 0.0,
            fac_old: 1e-4,
            reject_streak: 0,
            nonfinite_streak: 0,
            k: [
                k1,
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ],
            stage: vec![0.0; n],
            y_new: vec![0.0; n],
            cont: [
                y0.clone(),
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ],
            y: y0,
            accepted: 0,
            rejected: 0,
        };
        s.h = s.initial_step();
        s
    }

    fn error_scale(&self, i: usize, a: f64, b: f64) -> f64 {
        if self.log_mask[i] {
            self.rtol + (self.atol * exp(-a.max(b))).min(LOG_ERROR_CAP)
        } else {
            self.atol + self.rtol * a.abs().max(b.abs())
        }
    }

    fn initial_step(&self) -> f64 {
        let n = self.y.len().max(1) as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (i, (y, f)) in self.y.iter().zip(&self.k[0]).enumerate() {
            let sc = self.error_scale(i, *y, *y);
            let y = if self.log_mask[i] { 1.0 } else { *y };
            d0 += (y / sc) * (y / sc);
            d1 += (f / sc) * (f / sc);
        }
        let d0 = sqrt(d0 / n);
        let d1 = sqrt(d1 / n);
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(1.0)
    }

    pub(crate) fn derivative(&self) -> &[f64] {
        &self.k[0]
    }

    pub(crate) fn is_log(&self, i: usize) -> bool {
        self.log_mask[i]
    }

    /// Moves the flagged components to log coordinates. They must be
    /// positive.
    pub(crate) fn switch_to_log(&mut self, mask: &[bool]) {
        for (i, &m) in mask.iter().enumerate() {
            if m && !self.log_mask[i] {
                debug_assert!(self.y[i] > 0.0);
                self.y[i] = log(self.y[i]);
                self.log_mask[i] = true;
            }
        }
        (self.f)(&self.y, &self.log_mask, &mut self.k[0]);
        self.h_used = 0.0;
        self.t_old = self.t;
        for (c, y) in self.cont[0].iter_mut().zip(&self.y) {
            *c = *y;
        }
        for c in &mut self.cont[1..] {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Current state in original coordinates.
    pub(crate) fn state(&self, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.log_mask[i] { exp(self.y[i]) } else { self.y[i] };
        }
    }

    pub(crate) fn state_vec(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.y.len()];
        self.state(&mut out);
        out
    }

    /// Attempts one step of size `min(h, t_end - t)`.
    pub(crate) fn step(&mut self, t_end: f64) -> Result<StepOutcome, StepFailure> {
        let n = self.y.len();
        let mut h = self.h.min(t_end - self.t);
        if h <= 1e-14 * self.t.abs().max(1.0) {
            if t_end - self.t <= 1e-14 * self.t.abs().max(1.0) {
                h = t_end - self.t;
            } else {
                return Err(StepFailure::Underflow);
            }
        }

        macro_rules! stage {
            ($dst:expr, [$( ($a:expr, $ki:expr) ),*]) => {{
                for i in 0..n {
                    self.stage[i] = self.y[i] + h * (0.0 $( + $a * self.k[$ki][i] )*);
                }
                (self.f)(&self.stage, &self.log_mask, &mut self.k[$dst]);
            }};
        }

        stage!(1, [(A21, 0)]);
        stage!(2, [(A31, 0), (A32, 1)]);
        stage!(3, [(A41, 0), (A42, 1), (A43, 2)]);
        stage!(4, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
        stage!(5, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
        for i in 0..n {
            self.y_new[i] = self.y[i]
                + h * (A71 * self.k[0][i]
                    + A73 * self.k[2][i]
                    + A74 * self.k[3][i]
                    + A75 * self.k[4][i]
                    + A76 * self.k[5][i]);
        }
        (self.f)(&self.y_new, &self.log_mask, &mut self.k[6]);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * self.k[0][i]
                    + E3 * self.k[2][i]
                    + E4 * self.k[3][i]
                    + E5 * self.k[4][i]
                    + E6 * self.k[5][i]
                    + E7 * self.k[6][i]);
            let sc = self.error_scale(i, self.y[i], self.y_new[i]);
            err += (e / sc) * (e / sc);
        }
        let err = sqrt(err / n.max(1) as f64);

        if !err.is_finite() || self.y_new.iter().any(|v| !v.is_finite()) {
            self.nonfinite_streak += 1;
            self.rejected += 1;
            if self.nonfinite_streak > 30 {
                return Err(StepFailure::NonFinite);
            }
            self.h = h * 0.1;
            return Ok(StepOutcome::Rejected);
        }
        self.nonfinite_streak = 0;

        let negative = self.nonnegative
            && self
                .y_new
                .iter()
                .zip(&self.log_mask)
                .any(|(&v, &log)| !log && v <= -NEG_TOL);
        if err > 1.0 || negative {
            self.rejected += 1;
            self.reject_streak += 1;
            let fac = if negative && err <= 1.0 {
                0.5
            } else {
                (1.0 / (powf(err, EXPO) / SAFETY)).max(FAC_MIN)
            };
            self.h = h * fac;
            return Ok(StepOutcome::Rejected);
        }

        let ydiff: Vec<f64> = (0..n).map(|i| self.y_new[i] - self.y[i]).collect();
        for i in 0..n {
            let bspl = h * self.k[0][i] - ydiff[i];
            self.cont[0][i] = self.y[i];
            self.cont[1][i] = ydiff[i];
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff[i] - h * self.k[6][i] - bspl;
            self.cont[4][i] = h
                * (D1 * self.k[0][i]
                    + D3 * self.k[2][i]
                    + D4 * self.k[3][i]
                    + D5 * self.k[4][i]
                    + D6 * self.k[5][i]
                    + D7 * self.k[6][i]);
        }

        let mut clamped = 0;
        if self.nonnegative {
            for (v, &log) in self.y_new.iter_mut().zip(&self.log_mask) {
                if !log && *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
        }

        self.t_old = self.t;
        self.h_used = h;
        self.t += h;
        core::mem::swap(&mut self.y, &mut self.y_new);
        if clamped > 0 {
            (self.f)(&self.y, &self.log_mask, &mut self.k[0]);
        } else {
            let (head, tail) = self.k.split_at_mut(6);
            core::mem::swap(&mut head[0], &mut tail[0]);
        }
        self.accepted += 1;

        let fac11 = powf(err.max(1e-300), EXPO);
        let mut fac = fac11 / powf(self.fac_old, PI_BETA) / SAFETY;
        fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;
        if self.reject_streak > 0 {
            h_new = h_new.min(h);
        }
        self.fac_old = err.max(1e-4);
        self.reject_streak = 0;
        self.h = h_new;
        Ok(StepOutcome::Accepted { clamped })
    }

    /// Dense output on `[t_old, t]` of the last accepted step, in original
    /// coordinates.
    pub(crate) fn interpolate(&self, t: f64, out: &mut [f64]) {
        let s = if self.h_used > 0.0 {
            ((t - self.t_old) / self.h_used).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            let c = &self.cont;
            let z = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * c[4][i])));
            *o = if self.log_mask[i] { exp(z) } else { z };
        }
    }
}
