//! Quadrature rules shared by the demographic, simulation and equilibrium code.
//!
//! Integrals of sampled fields use the composite trapezoid rule on the age
//! grid. Integrals of coefficient functions (survival, class means) use an
//! adaptive Simpson rule, because the mortality rate is singular at the
//! maximum age and the grid trapezoid is far too coarse near it.

use crate::error::{Error, Result};

/// Composite trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral: `out[j]` approximates the integral from the
/// first sample to sample `j`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            acc += 0.5 * h * (values[j - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Trapezoid integral of the pointwise product of two sampled fields.
pub fn trapezoid_product(a: &[f64], b: &[f64], h: f64) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = a[1..n - 1]
        .iter()
        .zip(&b[1..n - 1])
        .map(|(x, y)| x * y)
        .sum();
    h * (inner + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol).map(|v| -v);
    }
    let fa = eval_finite(&f, a)?;
    let fb = eval_finite(&f, b)?;
    let m = 0.5 * (a + b);
    let fm = eval_finite(&f, m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval_finite(f, lm)?;
    let frm = eval_finite(f, rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

fn eval_finite<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Quadrature(format!("integrand is {v} at {x}")))
    }
}

/// Integral over one cell of width `h` of a linearly interpolated function
/// (`f0` at the left end, `f1` at the right end) multiplied by the kernel
/// `exp(-decay * (h - x) / h)`. The kernel equals 1 at the right end and
/// `exp(-decay)` at the left end.
///
/// This is exact for piecewise-linear forcing and a piecewise-constant decay
/// rate. It stays accurate when `decay` is of order one or larger, where the
/// plain trapezoid rule badly overestimates the integral.
pub fn fitted_exponential_cell(f0: f64, f1: f64, decay: f64, h: f64) -> f64 {
    let (w_total, w_ramp) = if decay.abs() < 1e-2 {
        let g = decay;
        (
            1.0 - g / 2.0 + g * g / 6.0 - g * g * g / 24.0 + g.powi(4) / 120.0,
            0.5 - g / 6.0 + g * g / 24.0 - g * g * g / 120.0 + g.powi(4) / 720.0,
        )
    } else {
        let one_minus = -(-decay).exp_m1();
        (one_minus / decay, 1.0 / decay - one_minus / (decay * decay))
    };
    h * (f0 * (w_total - w_ramp) + f1 * w_ramp)
}
