//! Dormand-Prince 5(4) embedded Runge-Kutta pair with step-size control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

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

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            h_init: 1e-4,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 5_000_000,
        }
    }
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub t: f64,
    pub accepted: usize,
    pub rejected: usize,
    pub stopped_early: bool,
}

/// Integrate `y' = f(t, y)` from `t0` to `t_end`.
///
/// `rhs(t, y, dy)` fills `dy`. `observe(t, y)` is called at `t0` and after
/// every accepted step. Steps are shortened so that every time in `landmarks`
/// (sorted, inside the span) is hit exactly.
pub fn integrate<F, O>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    ctl: &StepControl,
    landmarks: &[f64],
    mut observe: O,
) -> Result<(Vec<f64>, Summary)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64]) -> Result<Flow>,
{
    if !(ctl.rel_tol > 0.0 && ctl.abs_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerances must be positive (rel {}, abs {})",
            ctl.rel_tol, ctl.abs_tol
        )));
    }
    if !(t_end >= t0) {
        return Err(Error::InvalidParameter(format!(
            "end time {t_end} precedes start {t0}"
        )));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut summary = Summary {
        t,
        accepted: 0,
        rejected: 0,
        stopped_early: false,
    };
    if observe(t, &y)? == Flow::Stop {
        summary.stopped_early = true;
        return Ok((y, summary));
    }

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    rhs(t, &y, &mut k[0])?;
    let mut h = ctl.h_init.min(ctl.h_max).min(t_end - t);
    let mut marks = landmarks
        .iter()
        .copied()
        .filter(|&m| m > t0 && m < t_end)
        .peekable();
    let mut err_prev: f64 = 1e-4;

    while t < t_end {
        if summary.accepted + summary.rejected >= ctl.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        let target = marks.peek().copied().unwrap_or(t_end);
        let remaining = target - t;
        // snap to the target when the step would fall just short of it
        let landing = h >= remaining * (1.0 - 1e-9);
        let h_try = if landing { remaining } else { h };

        macro_rules! combine {
            ($dst:expr, $($c:expr => $ki:expr),+) => {
                for j in 0..n {
                    $dst[j] = y[j] + h_try * (0.0 $(+ $c * k[$ki][j])+);
                }
            };
        }
        combine!(stage, A21 => 0);
        rhs(t + C2 * h_try, &stage, &mut k[1])?;
        combine!(stage, A31 => 0, A32 => 1);
        rhs(t + C3 * h_try, &stage, &mut k[2])?;
        combine!(stage, A41 => 0, A42 => 1, A43 => 2);
        rhs(t + C4 * h_try, &stage, &mut k[3])?;
        combine!(stage, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        rhs(t + C5 * h_try, &stage, &mut k[4])?;
        combine!(stage, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        rhs(t + h_try, &stage, &mut k[5])?;
        combine!(y_new, A71 => 0, A73 => 2, A74 => 3, A75 => 4, A76 => 5);
        let t_new = if landing { target } else { t + h_try };
        rhs(t_new, &y_new, &mut k[6])?;

        let mut err: f64 = 0.0;
        for j in 0..n {
            let e = h_try
                * (E1 * k[0][j]
                    + E3 * k[2][j]
                    + E4 * k[3][j]
                    + E5 * k[4][j]
                    + E6 * k[5][j]
                    + E7 * k[6][j]);
            let scale = ctl.abs_tol + ctl.rel_tol * y[j].abs().max(y_new[j].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            err = 1e10;
        }

        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            summary.accepted += 1;
            while marks.peek().is_some_and(|&m| m <= t) {
                marks.next();
            }
            // PI controller
            let factor = 0.9 * err.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            err_prev = err.max(1e-4);
            if !landing || h_try >= h {
                h = (h_try * factor.clamp(0.2, 5.0)).min(ctl.h_max);
            }
            if observe(t, &y)? == Flow::Stop {
                summary.stopped_early = t < t_end;
                break;
            }
        } else {
            summary.rejected += 1;
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
        if h < ctl.h_min && t < t_end {
            return Err(Error::StepUnderflow { t, h });
        }
    }
    summary.t = t;
    Ok((y, summary))
}
