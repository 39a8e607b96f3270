//! Age-class reduction of the normalized model: `n` classes with constant
//! coefficients, transfer rates between consecutive classes, and an adaptive
//! integrator for the resulting ODE system.

use serde::Serialize;

use crate::demography::VitalRates;
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::rk::{self, Flow, StepControl};

const CLASS_QUAD_TOL: f64 = 1e-13;

/// Per-class constants of the reduced model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassParams {
    pub edges: Vec<f64>,
    /// Individuals in each class, `N_k`.
    pub population: Vec<f64>,
    /// Transfer rate to the next class, `rho_k` (last one forced to 0).
    pub transfer: Vec<f64>,
    /// `T_k = rho_k + mu_k`.
    pub outflow: Vec<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub birth_rate: f64,
    /// Value of `rho_n` produced by the recursion before it is set to 0.
    pub terminal_residual: f64,
}

impl ClassParams {
    pub fn len(&self) -> usize {
        self.population.len()
    }

    pub fn is_empty(&self) -> bool {
        self.population.is_empty()
    }

    /// Largest relative residual of the balance relations
    /// `B/N_1 = rho_1 + mu_1` and `rho_{k-1} N_{k-1} / N_k = rho_k + mu_k`
    /// over the classes whose rate was not forced.
    pub fn balance_residual(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for k in 0..n.saturating_sub(1) {
            let inflow = if k == 0 {
                self.birth_rate / self.population[0]
            } else {
                self.transfer[k - 1] * self.population[k - 1] / self.population[k]
            };
            let rhs = self.transfer[k] + self.mu[k];
            worst = worst
                .max((inflow - rhs).abs() / inflow.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
        }
        worst
    }

    fn check_dim(&self, what: &'static str, got: usize) -> Result<()> {
        if got == self.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                what,
                expected: self.len(),
                got,
            })
        }
    }
}

/// `n + 1` equally spaced edges on `[0, L]`.
pub fn uniform_edges(max_age: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| max_age * k as f64 / n as f64).collect()
}

/// Class constants from the stationary population `c` of `rates`.
///
/// `N_k` is the integral of `c` over the class, `mu_k` the `c`-weighted mean
/// of the mortality, `beta_k` and `gamma_k` plain interval means. The transfer
/// rates follow the forward balance recursion; a negative value is an error.
pub fn build_class_params(edges: &[f64], rates: &VitalRates) -> Result<ClassParams> {
    if edges.len() < 2 {
        return Err(Error::InvalidParameter(
            "need at least one age class".into(),
        ));
    }
    if edges[0] != 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "class edges must start at 0 and increase strictly".into(),
        ));
    }
    let last = *edges.last().unwrap();
    if (last - rates.max_age).abs() > 1e-12 * rates.max_age {
        return Err(Error::InvalidParameter(format!(
            "class edges end at {last}, expected the maximum age {}",
            rates.max_age
        )));
    }
    let n = edges.len() - 1;
    let alpha = rates.alpha;
    let mut population = Vec::with_capacity(n);
    let mut mu = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut gamma = Vec::with_capacity(n);
    let mut c_left = rates.birth_rate;
    for k in 0..n {
        let (lo, hi) = (edges[k], edges[k + 1]);
        let width = hi - lo;
        let density = |a: f64| {
            let m = rates.cumulative_mortality(lo, a).unwrap_or(f64::NAN);
            c_left * (-m / alpha).exp()
        };
        let nk = adaptive_simpson(&density, lo, hi, CLASS_QUAD_TOL * c_left.max(1.0))?;
        let weighted = adaptive_simpson(
            |a| rates.mu(a) * density(a),
            lo,
            hi,
            CLASS_QUAD_TOL * c_left.max(1.0),
        )?;
        if !(nk > 0.0) {
            return Err(Error::Quadrature(format!(
                "class {} holds no population ({nk})",
                k + 1
            )));
        }
        population.push(nk);
        mu.push(weighted / nk);
        beta.push(adaptive_simpson(|a| rates.beta(a), lo, hi, CLASS_QUAD_TOL)? / width);
        gamma.push(adaptive_simpson(|a| rates.gamma(a), lo, hi, CLASS_QUAD_TOL)? / width);
        c_left *= (-rates.cumulative_mortality(lo, hi)? / alpha).exp();
    }

    let mut transfer = vec![0.0; n];
    for k in 0..n {
        let inflow = if k == 0 {
            rates.birth_rate / population[0]
        } else {
            transfer[k - 1] * population[k - 1] / population[k]
        };
        transfer[k] = inflow - mu[k];
    }
    let terminal_residual = transfer[n - 1];
    transfer[n - 1] = 0.0;
    if let Some((k, &value)) = transfer.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::Demography { k: k + 1, value });
    }
    let outflow = transfer.iter().zip(&mu).map(|(r, m)| r + m).collect();
    Ok(ClassParams {
        edges: edges.to_vec(),
        population,
        transfer,
        outflow,
        mu,
        beta,
        gamma,
        birth_rate: rates.birth_rate,
        terminal_residual,
    })
}

/// Susceptible and infected proportions per class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

impl OdeState {
    pub fn disease_free(n: usize) -> Self {
        Self {
            s: vec![1.0; n],
            i: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }

    /// Layout `[i_1 .. i_n, s_1 .. s_n]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.i.iter().chain(&self.s).copied().collect()
    }

    pub fn from_flat(x: &[f64]) -> Self {
        let n = x.len() / 2;
        Self {
            i: x[..n].to_vec(),
            s: x[n..].to_vec(),
        }
    }

    /// `sum_j N_j i_j`.
    pub fn force(&self, cp: &ClassParams) -> f64 {
        cp.population.iter().zip(&self.i).map(|(n, i)| n * i).sum()
    }

    /// Largest amount by which the state leaves
    /// `{s >= 0, i >= 0, s + i <= 1}` (0 when inside).
    pub fn simplex_violation(&self) -> f64 {
        self.s
            .iter()
            .zip(&self.i)
            .map(|(&s, &i)| (-s).max(-i).max(s + i - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Class averages of the built-in initial infected proportion, weighted by
/// the class population.
pub fn project_initial_state(
    cp: &ClassParams,
    rates: &VitalRates,
    infected: impl Fn(f64) -> f64,
) -> Result<OdeState> {
    let n = cp.len();
    let mut i = Vec::with_capacity(n);
    let mut c_left = rates.birth_rate;
    for k in 0..n {
        let (lo, hi) = (cp.edges[k], cp.edges[k + 1]);
        let density = |a: f64| {
            c_left * (-rates.cumulative_mortality(lo, a).unwrap_or(f64::NAN) / rates.alpha).exp()
        };
        let mass = adaptive_simpson(|a| density(a) * infected(a), lo, hi, CLASS_QUAD_TOL)?;
        i.push(mass / cp.population[k]);
        c_left *= (-rates.cumulative_mortality(lo, hi)? / rates.alpha).exp();
    }
    Ok(OdeState {
        s: i.iter().map(|v| 1.0 - v).collect(),
        i,
    })
}

/// Right-hand side of the class model with boundary values `s_0 = 1`, `i_0 = 0`.
/// Returns `(ds/dt, di/dt)`.
pub fn ode_rhs(x: &OdeState, theta: &[f64], cp: &ClassParams) -> Result<(Vec<f64>, Vec<f64>)> {
    cp.check_dim("susceptible classes", x.s.len())?;
    cp.check_dim("infected classes", x.i.len())?;
    cp.check_dim("class control", theta.len())?;
    let force = x.force(cp);
    let n = cp.len();
    let mut ds = vec![0.0; n];
    let mut di = vec![0.0; n];
    for k in 0..n {
        let (s_prev, i_prev) = if k == 0 {
            (1.0, 0.0)
        } else {
            (x.s[k - 1], x.i[k - 1])
        };
        let t = cp.outflow[k];
        let infection = cp.beta[k] * force;
        ds[k] = t * s_prev - (t + theta[k] + infection) * x.s[k];
        di[k] = t * i_prev - (t + cp.gamma[k]) * x.i[k] + infection * x.s[k];
    }
    Ok((ds, di))
}

/// Time derivative of the recovered proportions implied by the model,
/// with `r_0 = 0`.
pub fn recovered_rhs(r: &[f64], x: &OdeState, theta: &[f64], cp: &ClassParams) -> Vec<f64> {
    (0..cp.len())
        .map(|k| {
            let r_prev = if k == 0 { 0.0 } else { r[k - 1] };
            cp.outflow[k] * (r_prev - r[k]) + cp.gamma[k] * x.i[k] + theta[k] * x.s[k]
        })
        .collect()
}

/// Vaccination policy for the class model.
///
/// `theta` must not mutate: it is called at every Runge-Kutta stage,
/// including rejected ones. `observe` runs after each accepted step.
pub trait ClassController {
    fn theta(&self, t: f64, x: &OdeState, cp: &ClassParams) -> Result<Vec<f64>>;

    fn observe(&mut self, _t: f64, _x: &OdeState, _cp: &ClassParams) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Uncontrolled;

impl ClassController for Uncontrolled {
    fn theta(&self, _: f64, x: &OdeState, _: &ClassParams) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.len()])
    }
}

/// Piecewise-constant control in time: `values[m]` applies on
/// `[m * period, (m + 1) * period)`.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    pub period: f64,
    pub values: Vec<Vec<f64>>,
}

impl ClassController for PiecewiseConstant {
    fn theta(&self, t: f64, _: &OdeState, _: &ClassParams) -> Result<Vec<f64>> {
        let m = ((t / self.period).floor().max(0.0) as usize).min(self.values.len() - 1);
        Ok(self.values[m].clone())
    }
}

impl PiecewiseConstant {
    /// Switching times inside `(0, t_end)`, so the integrator never steps across a jump.
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        (1..self.values.len())
            .map(|m| m as f64 * self.period)
            .filter(|&t| t < t_end)
            .collect()
    }
}

/// When to end an integration before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "tol", rename_all = "kebab-case")]
pub enum StopRule {
    Horizon,
    /// `||dx/dt||_inf < tol`.
    Stationary(f64),
    /// `max_k i_k < tol`.
    InfectedBelow(f64),
}

#[derive(Debug, Clone)]
pub struct OdeRunOptions {
    pub horizon: f64,
    pub step: StepControl,
    pub stop: StopRule,
    /// Minimum time between recorded points (0 records every accepted step).
    pub record_interval: f64,
    /// Times at which the state is recorded exactly.
    pub sample_times: Vec<f64>,
}

impl Default for OdeRunOptions {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            step: StepControl::default(),
            stop: StopRule::Stationary(1e-8),
            record_interval: 0.0,
            sample_times: Vec::new(),
        }
    }
}

const SET_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OdePoint {
    pub t: f64,
    pub state: OdeState,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub points: Vec<OdePoint>,
    pub samples: Vec<OdePoint>,
    pub converged: bool,
    pub final_time: f64,
    /// First time and size of an exit from the simplex beyond `1e-6`.
    pub left_simplex: Option<(f64, f64)>,
    /// Most negative applied control over all accepted steps.
    pub min_theta: f64,
    /// Largest simplex violation over all accepted steps.
    pub max_violation: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl OdeTrajectory {
    pub fn final_point(&self) -> &OdePoint {
        self.points.last().expect("trajectory has a final point")
    }
}

/// Integrate the class model with a Dormand-Prince pair.
pub fn integrate_adaptive<C: ClassController + ?Sized>(
    x0: &OdeState,
    controller: &mut C,
    cp: &ClassParams,
    opts: &OdeRunOptions,
    extra_breakpoints: &[f64],
) -> Result<OdeTrajectory> {
    cp.check_dim("initial susceptible classes", x0.s.len())?;
    cp.check_dim("initial infected classes", x0.i.len())?;
    let v = x0.simplex_violation();
    if v > SET_SLACK || x0.s.iter().chain(&x0.i).any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial class state leaves the admissible simplex by {v}"
        )));
    }
    let n = cp.len();
    let mut landmarks: Vec<f64> = opts
        .sample_times
        .iter()
        .chain(extra_breakpoints)
        .copied()
        .collect();
    landmarks.sort_by(f64::total_cmp);
    landmarks.dedup();

    let mut traj = OdeTrajectory {
        points: Vec::new(),
        samples: Vec::new(),
        converged: false,
        final_time: 0.0,
        left_simplex: None,
        min_theta: f64::INFINITY,
        max_violation: 0.0,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let mut last_recorded = f64::NEG_INFINITY;
    let mut last_point: Option<OdePoint> = None;

    let controller_cell = std::cell::RefCell::new(controller);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = OdeState::from_flat(y);
        let theta = controller_cell.borrow().theta(t, &x, cp)?;
        let (ds, di) = ode_rhs(&x, &theta, cp)?;
        dy[..n].copy_from_slice(&di);
        dy[n..].copy_from_slice(&ds);
        if dy.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: 0,
                detail: format!("class model derivative is not finite at t = {t}"),
            });
        }
        Ok(())
    };
    let observe = |t: f64, y: &[f64]| -> Result<Flow> {
        let x = OdeState::from_flat(y);
        controller_cell.borrow_mut().observe(t, &x, cp);
        let theta = controller_cell.borrow().theta(t, &x, cp)?;
        traj.min_theta = theta.iter().copied().fold(traj.min_theta, f64::min);
        let violation = x.simplex_violation();
        traj.max_violation = traj.max_violation.max(violation);
        if violation > SET_SLACK && traj.left_simplex.is_none() {
            traj.left_simplex = Some((t, violation));
        }
        let done = match opts.stop {
            StopRule::Horizon => false,
            StopRule::InfectedBelow(tol) => x.i.iter().all(|&v| v.abs() < tol),
            StopRule::Stationary(tol) => {
                let (ds, di) = ode_rhs(&x, &theta, cp)?;
                ds.iter().chain(&di).all(|v| v.abs() < tol)
            }
        };
        let point = OdePoint { t, state: x, theta };
        if opts.sample_times.iter().any(|&m| m == t) {
            traj.samples.push(point.clone());
        }
        if t - last_recorded >= opts.record_interval || done {
            last_recorded = t;
            traj.points.push(point.clone());
            last_point = None;
        } else {
            last_point = Some(point);
        }
        traj.final_time = t;
        if done {
            traj.converged = true;
            Ok(Flow::Stop)
        } else {
            Ok(Flow::Continue)
        }
    };
    let (_, summary) = rk::integrate(
        rhs,
        0.0,
        &x0.to_flat(),
        opts.horizon,
        &opts.step,
        &landmarks,
        observe,
    )?;
    if let Some(p) = last_point {
        traj.points.push(p);
    }
    traj.accepted_steps = summary.accepted;
    traj.rejected_steps = summary.rejected;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demography::{AgeGrid, Profile};
    use approx::assert_relative_eq;

    fn builtin(n: usize) -> (VitalRates, ClassParams) {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let rates = VitalRates::builtin(800.0, &grid).unwrap();
        let cp = build_class_params(&uniform_edges(1.0, n), &rates).unwrap();
        (rates, cp)
    }

    fn flat_rates(b: f64) -> VitalRates {
        VitalRates {
            mortality: Profile::constant(0.0),
            transmission: Profile::constant(2.0),
            recovery: Profile::constant(1.0),
            birth_rate: b,
            alpha: 1.0,
            max_age: 1.0,
            clamp_age: 1.0,
        }
    }

    #[test]
    fn builtin_classes_are_consistent() {
        let (_, cp) = builtin(100);
        assert!(cp.transfer[..99].iter().all(|&r| r > 0.0));
        assert_eq!(cp.transfer[99], 0.0);
        assert!(cp.balance_residual() < 1e-8, "{}", cp.balance_residual());
        let total: f64 = cp.population.iter().sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_population_hand_recursion() {
        let cp = build_class_params(&uniform_edges(1.0, 3), &flat_rates(1.5)).unwrap();
        for k in 0..3 {
            assert_relative_eq!(cp.population[k], 0.5, epsilon = 1e-12);
        }
        // B / N_1 = 3, no mortality, equal classes: rho = 3, 3, (3 -> forced 0)
        assert_relative_eq!(cp.transfer[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(cp.transfer[1], 3.0, epsilon = 1e-12);
        assert_eq!(cp.transfer[2], 0.0);
        assert_relative_eq!(cp.terminal_residual, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn single_class_reports_residual() {
        let (_, cp) = builtin(1);
        assert_eq!(cp.transfer[0], 0.0);
        // B / N_1 = mu_1 up to the population left at the clamp
        let residual = cp.birth_rate / cp.population[0] - cp.mu[0];
        assert_relative_eq!(residual, cp.terminal_residual, epsilon = 1e-9);
        assert!(residual.abs() < 0.05 * cp.mu[0]);
    }

    #[test]
    fn invalid_edges_are_rejected() {
        let rates = flat_rates(1.0);
        let cp = build_class_params(&[0.0, 0.1, 1.0], &rates).unwrap();
        assert!(cp.transfer[0] > 0.0);
        assert!(build_class_params(&[0.0, 0.5, 0.4, 1.0], &rates).is_err());
        assert!(build_class_params(&[0.0, 0.5], &rates).is_err());
        assert!(build_class_params(&[0.1, 1.0], &rates).is_err());
    }

    #[test]
    fn disease_free_fixed_point() {
        let (_, cp) = builtin(10);
        let x = OdeState::disease_free(10);
        let (ds, di) = ode_rhs(&x, &[0.0; 10], &cp).unwrap();
        assert!(ds.iter().chain(&di).all(|&v| v == 0.0));
        let theta: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let x = OdeState {
            s: vec![0.7; 10],
            i: vec![0.0; 10],
        };
        let (_, di) = ode_rhs(&x, &theta, &cp).unwrap();
        assert!(di.iter().all(|&v| v == 0.0));
        assert!(ode_rhs(&x, &[0.0; 3], &cp).is_err());
    }

    #[test]
    fn disease_free_run_converges_immediately() {
        let (_, cp) = builtin(10);
        let x = OdeState::disease_free(10);
        let traj =
            integrate_adaptive(&x, &mut Uncontrolled, &cp, &OdeRunOptions::default(), &[]).unwrap();
        assert!(traj.converged);
        assert_eq!(traj.final_time, 0.0);
        assert_eq!(traj.final_point().state, x);
    }

    #[test]
    fn linear_cascade_matches_closed_form() {
        // no transmission: s follows a linear cascade with equal rates T, s_0 = 1
        let mut rates = flat_rates(3.0);
        rates.transmission = Profile::constant(0.0);
        let cp = build_class_params(&uniform_edges(1.0, 3), &rates).unwrap();
        let t_rate = cp.outflow[0];
        let x0 = OdeState {
            s: vec![0.0; 3],
            i: vec![0.2, 0.1, 0.0],
        };
        let opts = OdeRunOptions {
            horizon: 0.7,
            stop: StopRule::Horizon,
            step: StepControl {
                rel_tol: 1e-10,
                abs_tol: 1e-13,
                ..StepControl::default()
            },
            ..OdeRunOptions::default()
        };
        let traj = integrate_adaptive(&x0, &mut Uncontrolled, &cp, &opts, &[]).unwrap();
        let t = traj.final_time;
        assert_relative_eq!(t, 0.7, epsilon = 1e-14);
        let x = &traj.final_point().state;
        let e = (-t_rate * t).exp();
        // s_1 = 1 - e^{-Tt}, s_2 = 1 - e^{-Tt}(1 + Tt) for s(0) = 0 and constant rate T
        assert_relative_eq!(x.s[0], 1.0 - e, max_relative = 1e-8);
        assert_relative_eq!(x.s[1], 1.0 - e * (1.0 + t_rate * t), max_relative = 1e-8);
        // i_1 = 0.2 e^{-(T+g)t}
        assert_relative_eq!(
            x.i[0],
            0.2 * (-(t_rate + 1.0) * t).exp(),
            max_relative = 1e-8
        );
    }

    #[test]
    fn projection_of_builtin_infection() {
        let (rates, cp) = builtin(100);
        let x = project_initial_state(&cp, &rates, crate::pide::initial_infected).unwrap();
        assert_eq!(x.i[0] >= 0.0, true);
        let k =
            x.i.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
        assert!(k == 49 || k == 50);
        assert!(x.i[k] < 0.5e-3 && x.i[k] > 0.4e-3);
        for k in 0..100 {
            assert_relative_eq!(x.s[k] + x.i[k], 1.0, epsilon = 1e-15);
        }
    }
}
