//! Input-output linearizing vaccination law for the age-class model.
//!
//! Output `y_k = i_k` has relative degree two. With `z = sum_j N_j i_j`:
//! `L_f h_k = f_k`, `L_g L_f h_k = -beta_k s_k z`, and `b_k = L_f^2 h_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{ClassController, ClassParams, OdeState};

/// Per-class root magnitudes; the closed-loop output obeys
/// `y'' + (r1 + r2) y' + r1 r2 y = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeGains {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
}

impl OdeGains {
    pub fn uniform(n: usize, r1: f64, r2: f64) -> Result<Self> {
        let g = Self {
            r1: vec![r1; n],
            r2: vec![r2; n],
        };
        g.validate(n)?;
        Ok(g)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (what, v) in [("gain roots r1", &self.r1), ("gain roots r2", &self.r2)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: v.len(),
                });
            }
            if let Some(bad) = v.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
                return Err(Error::InvalidParameter(format!(
                    "{what} must be positive, got {bad}"
                )));
            }
        }
        Ok(())
    }

    /// `r1 * r2`.
    pub fn stiffness(&self, k: usize) -> f64 {
        self.r1[k] * self.r2[k]
    }

    /// `r1 + r2`.
    pub fn damping(&self, k: usize) -> f64 {
        self.r1[k] + self.r2[k]
    }
}

fn check_state(x: &OdeState, cp: &ClassParams) -> Result<()> {
    for (what, got) in [
        ("susceptible classes", x.s.len()),
        ("infected classes", x.i.len()),
    ] {
        if got != cp.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: cp.len(),
                got,
            });
        }
    }
    Ok(())
}

/// Uncontrolled drift `f(x)` in the layout `[infected rows, susceptible rows]`.
pub fn lie_f(x: &OdeState, cp: &ClassParams) -> Result<Vec<f64>> {
    check_state(x, cp)?;
    let n = cp.len();
    let z = x.force(cp);
    let mut f = vec![0.0; 2 * n];
    for k in 0..n {
        let (s_prev, i_prev) = if k == 0 {
            (1.0, 0.0)
        } else {
            (x.s[k - 1], x.i[k - 1])
        };
        let t = cp.outflow[k];
        let infection = cp.beta[k] * x.s[k] * z;
        f[k] = t * i_prev - (t + cp.gamma[k]) * x.i[k] + infection;
        f[n + k] = t * s_prev - t * x.s[k] - infection;
    }
    Ok(f)
}

/// Diagonal of the decoupling matrix, second Lie derivatives and the
/// linear target dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackTerms {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn feedback_matrices(
    x: &OdeState,
    cp: &ClassParams,
    gains: &OdeGains,
) -> Result<FeedbackTerms> {
    check_state(x, cp)?;
    gains.validate(cp.len())?;
    let n = cp.len();
    let z = x.force(cp);
    if z == 0.0 || !z.is_finite() {
        return Err(Error::OutsideDomain(format!(
            "total infection is {z}; the decoupling matrix is singular"
        )));
    }
    if let Some(m) = x.s.iter().position(|&s| s == 0.0) {
        return Err(Error::OutsideDomain(format!(
            "susceptible proportion of class {} is zero",
            m + 1
        )));
    }
    let f = lie_f(x, cp)?;
    let zf: f64 = cp
        .population
        .iter()
        .zip(&f[..n])
        .map(|(p, fi)| p * fi)
        .sum();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut v = vec![0.0; n];
    for k in 0..n {
        let t = cp.outflow[k];
        let f_prev = if k == 0 { 0.0 } else { f[k - 1] };
        a[k] = -cp.beta[k] * x.s[k] * z;
        b[k] = cp.beta[k] * x.s[k] * zf + t * f_prev - (t + cp.gamma[k]) * f[k]
            + cp.beta[k] * f[n + k] * z;
        v[k] = -gains.damping(k) * f[k] - gains.stiffness(k) * x.i[k];
    }
    Ok(FeedbackTerms { a, b, v })
}

/// `u = A^{-1} (v - b)`.
pub fn ode_feedback(x: &OdeState, cp: &ClassParams, gains: &OdeGains) -> Result<Vec<f64>> {
    let m = feedback_matrices(x, cp, gains)?;
    Ok(m.v
        .iter()
        .zip(&m.b)
        .zip(&m.a)
        .map(|((v, b), a)| (v - b) / a)
        .collect())
}

/// Passes `u` until the total infection first drops below `delta`, then
/// returns zero forever; `latched` carries that state between calls.
pub fn switch_off(u: &[f64], total_infected: f64, delta: f64, latched: &mut bool) -> Vec<f64> {
    if total_infected < delta {
        *latched = true;
    }
    if *latched {
        vec![0.0; u.len()]
    } else {
        u.to_vec()
    }
}

pub fn saturate_nonneg(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn check_threshold(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "switch threshold must lie in (0, 1), got {delta}"
        )))
    }
}

/// The linearizing law with the switch-off latch and optional saturation.
#[derive(Debug, Clone)]
pub struct ClassFeedback {
    pub gains: OdeGains,
    pub delta: f64,
    pub saturate: bool,
    latched: bool,
    switch_time: Option<f64>,
}

impl ClassFeedback {
    pub fn new(gains: OdeGains, delta: f64, saturate: bool) -> Result<Self> {
        check_threshold(delta)?;
        Ok(Self {
            gains,
            delta,
            saturate,
            latched: false,
            switch_time: None,
        })
    }

    pub fn switch_time(&self) -> Option<f64> {
        self.switch_time
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }
}

impl ClassController for ClassFeedback {
    fn theta(&self, _t: f64, x: &OdeState, cp: &ClassParams) -> Result<Vec<f64>> {
        if self.latched || x.force(cp) < self.delta {
            return Ok(vec![0.0; cp.len()]);
        }
        let u = ode_feedback(x, cp, &self.gains)?;
        Ok(if self.saturate {
            saturate_nonneg(&u)
        } else {
            u
        })
    }

    fn observe(&mut self, t: f64, x: &OdeState, cp: &ClassParams) {
        if !self.latched && x.force(cp) < self.delta {
            self.latched = true;
            self.switch_time = Some(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(n: usize) -> ClassParams {
        let population: Vec<f64> = (0..n).map(|k| 0.3 / (1.0 + k as f64)).collect();
        let transfer: Vec<f64> = (0..n)
            .map(|k| if k + 1 == n { 0.0 } else { 4.0 + k as f64 })
            .collect();
        let mu: Vec<f64> = (0..n).map(|k| 0.1 + 0.2 * k as f64).collect();
        ClassParams {
            edges: crate::ode::uniform_edges(1.0, n),
            outflow: transfer.iter().zip(&mu).map(|(r, m)| r + m).collect(),
            transfer,
            mu,
            beta: (0..n).map(|k| 5.0 + k as f64).collect(),
            gamma: (0..n).map(|k| 2.0 + 0.5 * k as f64).collect(),
            population,
            birth_rate: 1.0,
            terminal_residual: 0.0,
        }
    }

    fn state(n: usize) -> OdeState {
        OdeState {
            i: (0..n).map(|k| 0.01 * (1.0 + k as f64)).collect(),
            s: (0..n).map(|k| 0.9 - 0.05 * k as f64).collect(),
        }
    }

    #[test]
    fn drift_vanishes_without_infection() {
        let cp = params(4);
        let f = lie_f(&OdeState::disease_free(4), &cp).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
        let x = OdeState {
            s: vec![0.5, 0.6, 0.7, 0.8],
            i: vec![0.0; 4],
        };
        assert!(lie_f(&x, &cp).unwrap()[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn domain_errors() {
        let cp = params(3);
        let g = OdeGains::uniform(3, 200.0, 80.0).unwrap();
        let x = OdeState::disease_free(3);
        assert!(matches!(
            feedback_matrices(&x, &cp, &g),
            Err(Error::OutsideDomain(_))
        ));
        let mut x = state(3);
        x.s[1] = 0.0;
        match feedback_matrices(&x, &cp, &g) {
            Err(Error::OutsideDomain(msg)) => assert!(msg.contains("class 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_class_by_hand() {
        let cp = params(1);
        let (n1, t, g, b) = (cp.population[0], cp.outflow[0], cp.gamma[0], cp.beta[0]);
        let (s, i) = (0.8, 0.05);
        let x = OdeState {
            s: vec![s],
            i: vec![i],
        };
        let gains = OdeGains::uniform(1, 3.0, 7.0).unwrap();
        // f1 = -(T+g) i + b s N i, f2 = T - T s - b s N i
        let z = n1 * i;
        let f1 = -(t + g) * i + b * s * z;
        let f2 = t - t * s - b * s * z;
        let a = -b * s * z;
        let bb = b * s * n1 * f1 - (t + g) * f1 + b * f2 * z;
        let v = -10.0 * f1 - 21.0 * i;
        let u = ode_feedback(&x, &cp, &gains).unwrap();
        assert_relative_eq!(u[0], (v - bb) / a, max_relative = 1e-12);
    }

    #[test]
    fn decoupling_matrix_is_invertible() {
        let cp = params(5);
        let m =
            feedback_matrices(&state(5), &cp, &OdeGains::uniform(5, 200.0, 80.0).unwrap()).unwrap();
        for a in m.a {
            assert_relative_eq!(a * (1.0 / a), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn b_is_second_derivative_along_free_flow() {
        let cp = params(4);
        let x = state(4);
        let m = feedback_matrices(&x, &cp, &OdeGains::uniform(4, 1.0, 1.0).unwrap()).unwrap();
        // i(t) along the uncontrolled flow, second derivative by central differences
        let advance = |x: &OdeState, h: f64| {
            // classical RK4 step of the uncontrolled model
            let f = |x: &OdeState| lie_f(x, &cp).unwrap();
            let add = |x: &OdeState, d: &[f64], c: f64| {
                OdeState::from_flat(
                    &x.to_flat()
                        .iter()
                        .zip(d)
                        .map(|(a, b)| a + c * b)
                        .collect::<Vec<_>>(),
                )
            };
            let k1 = f(x);
            let k2 = f(&add(x, &k1, h / 2.0));
            let k3 = f(&add(x, &k2, h / 2.0));
            let k4 = f(&add(x, &k3, h));
            let d: Vec<f64> = (0..8)
                .map(|j| (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0)
                .collect();
            add(x, &d, h)
        };
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let fwd = advance(&x, h);
            let back = advance(&x, -h);
            let err = (0..4)
                .map(|k| ((fwd.i[k] - 2.0 * x.i[k] + back.i[k]) / (h * h) - m.b[k]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
        assert!(errs[1] < 1e-3 * m.b.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn v_depends_only_on_output_derivatives() {
        let cp = params(3);
        let g = OdeGains::uniform(3, 200.0, 80.0).unwrap();
        let x1 = state(3);
        let m1 = feedback_matrices(&x1, &cp, &g).unwrap();
        let f1 = lie_f(&x1, &cp).unwrap();
        let v: Vec<f64> = (0..3).map(|k| -280.0 * f1[k] - 16000.0 * x1.i[k]).collect();
        for k in 0..3 {
            assert_relative_eq!(m1.v[k], v[k], max_relative = 1e-14);
        }
    }

    #[test]
    fn switch_off_latches() {
        let u = [1.0, -2.0];
        let mut latched = false;
        assert_eq!(switch_off(&u, 0.5, 0.1, &mut latched), u.to_vec());
        let mut latched = false;
        assert_eq!(switch_off(&u, 0.05, 0.1, &mut latched), vec![0.0, 0.0]);

        let series = [0.5, 0.3, 0.08, 0.2, 0.6, 0.01];
        let mut latched = false;
        let out: Vec<Vec<f64>> = series
            .iter()
            .map(|&z| switch_off(&u, z, 0.1, &mut latched))
            .collect();
        assert_eq!(out[0], u.to_vec());
        assert_eq!(out[1], u.to_vec());
        for o in &out[2..] {
            assert_eq!(o, &vec![0.0, 0.0]);
        }
    }

    #[test]
    fn saturation() {
        assert_eq!(saturate_nonneg(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(saturate_nonneg(&[0.0, 3.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn gains_validation() {
        assert!(OdeGains::uniform(3, 200.0, -1.0).is_err());
        assert!(ClassFeedback::new(OdeGains::uniform(3, 1.0, 1.0).unwrap(), 1.5, true).is_err());
    }
}
