//! Upwind transport-reaction solver for the age-structured SIR model in its
//! raw, normalized and homogeneous-boundary forms.
//!
//! All three variants use first-order backward differences in age with an
//! explicit Euler step in time, and impose the inflow boundary values at
//! node 0 after each step.

use serde::{Deserialize, Serialize};

use crate::demography::{stationary_profile, AgeGrid, VitalRates};
use crate::error::{Error, Result};

/// Which form of the model a [`FieldState`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Densities `S, I, R` with `S(t,0) = B`.
    Raw,
    /// Proportions `s, i, r` with `s + i + r = 1`.
    Normalized,
    /// `s_hat = s - 1`, `i` and `r`, with homogeneous inflow for `s_hat` and `i`.
    Homogeneous,
}

/// Age-gridded state at one time. For [`Variant::Homogeneous`] the first
/// component holds `s_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub variant: Variant,
    pub susceptible: Vec<f64>,
    pub infected: Vec<f64>,
    pub recovered: Vec<f64>,
}

impl FieldState {
    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    /// Densities from proportions and a total population field.
    pub fn to_raw(&self, population: &[f64]) -> Result<FieldState> {
        let s = self.to_normalized();
        check_len("population", s.len(), population.len())?;
        let mul = |v: &[f64]| {
            v.iter()
                .zip(population)
                .map(|(x, p)| x * p)
                .collect::<Vec<_>>()
        };
        Ok(FieldState {
            t: s.t,
            variant: Variant::Raw,
            susceptible: mul(&s.susceptible),
            infected: mul(&s.infected),
            recovered: mul(&s.recovered),
        })
    }

    /// Proportions. Raw densities are divided by their pointwise total.
    pub fn to_normalized(&self) -> FieldState {
        match self.variant {
            Variant::Normalized => self.clone(),
            Variant::Homogeneous => FieldState {
                variant: Variant::Normalized,
                susceptible: self.susceptible.iter().map(|x| x + 1.0).collect(),
                ..self.clone()
            },
            Variant::Raw => {
                let total: Vec<f64> = self.population();
                let div = |v: &[f64]| v.iter().zip(&total).map(|(x, p)| x / p).collect::<Vec<_>>();
                FieldState {
                    t: self.t,
                    variant: Variant::Normalized,
                    susceptible: div(&self.susceptible),
                    infected: div(&self.infected),
                    recovered: div(&self.recovered),
                }
            }
        }
    }

    /// Homogeneous form, `s_hat = s - 1`.
    pub fn to_homogeneous(&self) -> FieldState {
        match self.variant {
            Variant::Homogeneous => self.clone(),
            _ => {
                let n = self.to_normalized();
                FieldState {
                    variant: Variant::Homogeneous,
                    susceptible: n.susceptible.iter().map(|x| x - 1.0).collect(),
                    ..n
                }
            }
        }
    }

    /// Pointwise `S + I + R` (for the raw variant this is `P(t, a)`).
    pub fn population(&self) -> Vec<f64> {
        let offset = if self.variant == Variant::Homogeneous {
            1.0
        } else {
            0.0
        };
        self.susceptible
            .iter()
            .zip(&self.infected)
            .zip(&self.recovered)
            .map(|((s, i), r)| s + offset + i + r)
            .collect()
    }

    fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.susceptible
            .iter()
            .chain(&self.infected)
            .chain(&self.recovered)
            .copied()
    }

    fn check_shape(&self, grid: &AgeGrid) -> Result<()> {
        check_len("susceptible field", grid.len(), self.susceptible.len())?;
        check_len("infected field", grid.len(), self.infected.len())?;
        check_len("recovered field", grid.len(), self.recovered.len())
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Time stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub grid: AgeGrid,
    pub variant: Variant,
    /// Record a full snapshot every this many steps.
    pub snapshot_every: usize,
}

impl SchemeConfig {
    pub fn new(dt: f64, horizon: f64, grid: AgeGrid, variant: Variant) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be >= 0, got {horizon}"
            )));
        }
        let steps = (horizon / dt).round() as usize;
        Ok(Self {
            dt,
            horizon,
            grid,
            variant,
            snapshot_every: (steps / 200).max(1),
        })
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Outcome of the Courant-Friedrichs-Lewy check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflVerdict {
    pub ratio: f64,
    pub pass: bool,
}

/// Passes iff `alpha * dt / da <= 1`.
pub fn check_cfl(cfg: &SchemeConfig, alpha: f64) -> CflVerdict {
    let ratio = (alpha * cfg.dt / cfg.grid.step()).abs();
    // tolerate representation error when dt == da exactly in decimal
    CflVerdict {
        ratio,
        pass: ratio <= 1.0 + 1e-12,
    }
}

fn require_cfl(cfg: &SchemeConfig, alpha: f64) -> Result<f64> {
    let v = check_cfl(cfg, alpha);
    if v.pass {
        Ok(v.ratio)
    } else {
        Err(Error::Cfl { ratio: v.ratio })
    }
}

/// Coefficients sampled once on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRates {
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub birth_rate: f64,
    pub alpha: f64,
}

impl GridRates {
    pub fn new(rates: &VitalRates, grid: &AgeGrid) -> Self {
        Self {
            mu: rates.sample(grid, VitalRates::mu),
            beta: rates.sample(grid, VitalRates::beta),
            gamma: rates.sample(grid, VitalRates::gamma),
            birth_rate: rates.birth_rate,
            alpha: rates.alpha,
        }
    }

    fn check_shape(&self, grid: &AgeGrid) -> Result<()> {
        check_len("sampled mu", grid.len(), self.mu.len())?;
        check_len("sampled beta", grid.len(), self.beta.len())?;
        check_len("sampled gamma", grid.len(), self.gamma.len())
    }
}

/// Trapezoid value of `int_0^L field * weight`.
pub fn coupling_integral(field: &[f64], weight: &[f64], grid: &AgeGrid) -> Result<f64> {
    check_len("coupling field", grid.len(), field.len())?;
    check_len("coupling weight", grid.len(), weight.len())?;
    Ok(crate::quadrature::trapezoid_product(
        field,
        weight,
        grid.step(),
    ))
}

fn check_theta(theta: &[f64], grid: &AgeGrid) -> Result<()> {
    check_len("control field", grid.len(), theta.len())?;
    for (node, &value) in theta.iter().enumerate() {
        if value.is_nan() || value < 0.0 {
            return Err(Error::NegativeControl { node, value });
        }
    }
    Ok(())
}

fn check_variant(state: &FieldState, expected: Variant) -> Result<()> {
    if state.variant == expected {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "expected a {expected:?} state, got {:?}",
            state.variant
        )))
    }
}

/// One upwind step of the raw model.
pub fn step_raw(
    state: &FieldState,
    theta: &[f64],
    rates: &GridRates,
    cfg: &SchemeConfig,
) -> Result<FieldState> {
    check_variant(state, Variant::Raw)?;
    let grid = &cfg.grid;
    state.check_shape(grid)?;
    rates.check_shape(grid)?;
    check_theta(theta, grid)?;
    let lambda = require_cfl(cfg, rates.alpha)?;
    let dt = cfg.dt;
    let force = grid.integrate(&state.infected);

    let (s, i, r) = (&state.susceptible, &state.infected, &state.recovered);
    let n = grid.len();
    let mut next = FieldState {
        t: state.t + dt,
        variant: Variant::Raw,
        susceptible: vec![0.0; n],
        infected: vec![0.0; n],
        recovered: vec![0.0; n],
    };
    next.susceptible[0] = rates.birth_rate;
    for j in 1..n {
        let (mu, beta, gamma) = (rates.mu[j], rates.beta[j], rates.gamma[j]);
        let infection = beta * s[j] * force;
        next.susceptible[j] =
            s[j] - lambda * (s[j] - s[j - 1]) - dt * ((theta[j] + mu) * s[j] + infection);
        next.infected[j] =
            i[j] - lambda * (i[j] - i[j - 1]) + dt * (infection - (mu + gamma) * i[j]);
        next.recovered[j] =
            r[j] - lambda * (r[j] - r[j - 1]) + dt * (theta[j] * s[j] + gamma * i[j] - mu * r[j]);
    }
    Ok(next)
}

/// One upwind step of the normalized model; `population` is `P(t, .)`.
pub fn step_normalized(
    state: &FieldState,
    theta: &[f64],
    population: &[f64],
    rates: &GridRates,
    cfg: &SchemeConfig,
) -> Result<FieldState> {
    check_variant(state, Variant::Normalized)?;
    let grid = &cfg.grid;
    state.check_shape(grid)?;
    rates.check_shape(grid)?;
    check_theta(theta, grid)?;
    let lambda = require_cfl(cfg, rates.alpha)?;
    let dt = cfg.dt;
    let force = coupling_integral(&state.infected, population, grid)?;

    let (s, i, r) = (&state.susceptible, &state.infected, &state.recovered);
    let n = grid.len();
    let mut next = FieldState {
        t: state.t + dt,
        variant: Variant::Normalized,
        susceptible: vec![0.0; n],
        infected: vec![0.0; n],
        recovered: vec![0.0; n],
    };
    next.susceptible[0] = 1.0;
    for j in 1..n {
        let infection = rates.beta[j] * s[j] * force;
        let vaccination = theta[j] * s[j];
        next.susceptible[j] = s[j] - lambda * (s[j] - s[j - 1]) - dt * (vaccination + infection);
        next.infected[j] =
            i[j] - lambda * (i[j] - i[j - 1]) + dt * (infection - rates.gamma[j] * i[j]);
        next.recovered[j] =
            r[j] - lambda * (r[j] - r[j - 1]) + dt * (vaccination + rates.gamma[j] * i[j]);
    }
    Ok(next)
}

/// One upwind step of the homogeneous-boundary model in `s_hat = s - 1`.
///
/// The `s_hat` equation is obtained by substituting `s = 1 + s_hat` into the
/// normalized model, so its infection term carries a minus sign.
pub fn step_homogeneous(
    state: &FieldState,
    theta: &[f64],
    population: &[f64],
    rates: &GridRates,
    cfg: &SchemeConfig,
) -> Result<FieldState> {
    check_variant(state, Variant::Homogeneous)?;
    let grid = &cfg.grid;
    state.check_shape(grid)?;
    rates.check_shape(grid)?;
    check_theta(theta, grid)?;
    let lambda = require_cfl(cfg, rates.alpha)?;
    let dt = cfg.dt;
    let force = coupling_integral(&state.infected, population, grid)?;

    let (sh, i, r) = (&state.susceptible, &state.infected, &state.recovered);
    let n = grid.len();
    let mut next = FieldState {
        t: state.t + dt,
        variant: Variant::Homogeneous,
        susceptible: vec![0.0; n],
        infected: vec![0.0; n],
        recovered: vec![0.0; n],
    };
    for j in 1..n {
        let s = 1.0 + sh[j];
        let infection = rates.beta[j] * s * force;
        next.susceptible[j] =
            sh[j] - lambda * (sh[j] - sh[j - 1]) - dt * (theta[j] * s + infection);
        next.infected[j] =
            i[j] - lambda * (i[j] - i[j - 1]) + dt * (infection - rates.gamma[j] * i[j]);
        next.recovered[j] =
            r[j] - lambda * (r[j] - r[j - 1]) + dt * (theta[j] * s + rates.gamma[j] * i[j]);
    }
    Ok(next)
}

/// Vaccination policy queried once per time step.
pub trait FieldController {
    fn theta(&mut self, state: &FieldState, grid: &AgeGrid, rates: &GridRates) -> Result<Vec<f64>>;
}

/// `Theta = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoControl;

impl FieldController for NoControl {
    fn theta(&mut self, _: &FieldState, grid: &AgeGrid, _: &GridRates) -> Result<Vec<f64>> {
        Ok(vec![0.0; grid.len()])
    }
}

/// A fixed, time-independent control field.
#[derive(Debug, Clone)]
pub struct FixedControl(pub Vec<f64>);

impl FieldController for FixedControl {
    fn theta(&mut self, _: &FieldState, _: &AgeGrid, _: &GridRates) -> Result<Vec<f64>> {
        Ok(self.0.clone())
    }
}

impl<F> FieldController for F
where
    F: FnMut(&FieldState, &AgeGrid, &GridRates) -> Result<Vec<f64>>,
{
    fn theta(&mut self, state: &FieldState, grid: &AgeGrid, rates: &GridRates) -> Result<Vec<f64>> {
        self(state, grid, rates)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: FieldState,
    pub theta: Vec<f64>,
}

/// Per-step aggregate values. Totals are numbers of individuals
/// (`int S`, `int I`, `int R`; proportions are weighted by `P`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub t: f64,
    pub total_i: f64,
    pub total_s: f64,
    pub total_r: f64,
    pub min_state: f64,
    pub max_state: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub variant: Variant,
    pub grid: AgeGrid,
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub summary: Vec<SummaryRow>,
}

impl Trajectory {
    pub fn total_infected(&self) -> Vec<f64> {
        self.summary.iter().map(|r| r.total_i).collect()
    }

    pub fn final_state(&self) -> &FieldState {
        &self
            .snapshots
            .last()
            .expect("trajectory has a final snapshot")
            .state
    }
}

const STATE_SLACK: f64 = 1e-9;
const NORMALIZATION_TOL: f64 = 1e-8;
const POPULATION_REL_TOL: f64 = 1e-6;

fn summarize(state: &FieldState, population: &[f64], grid: &AgeGrid) -> SummaryRow {
    let (total_s, total_i, total_r) = match state.variant {
        Variant::Raw => (
            grid.integrate(&state.susceptible),
            grid.integrate(&state.infected),
            grid.integrate(&state.recovered),
        ),
        Variant::Normalized | Variant::Homogeneous => {
            let n = state.to_normalized();
            let w = |v: &[f64]| crate::quadrature::trapezoid_product(v, population, grid.step());
            (w(&n.susceptible), w(&n.infected), w(&n.recovered))
        }
    };
    let (min_state, max_state) = state
        .all_values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    SummaryRow {
        t: state.t,
        total_i,
        total_s,
        total_r,
        min_state,
        max_state,
    }
}

fn check_invariants(state: &FieldState, population: &[f64], scale: f64, step: usize) -> Result<()> {
    if let Some(v) = state.all_values().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            step,
            detail: format!("state component is {v} at t = {}", state.t),
        });
    }
    let fail = |detail: String| Err(Error::Invariant { step, detail });
    match state.variant {
        Variant::Raw => {
            let slack = STATE_SLACK * scale;
            if let Some(v) = state.all_values().find(|&v| v < -slack) {
                return fail(format!("negative density {v}"));
            }
            for (j, (total, p)) in state.population().iter().zip(population).enumerate() {
                if (total - p).abs() > POPULATION_REL_TOL * p.abs().max(f64::MIN_POSITIVE) + slack {
                    return fail(format!("S+I+R = {total} differs from P = {p} at node {j}"));
                }
            }
        }
        Variant::Normalized | Variant::Homogeneous => {
            let n = state.to_normalized();
            if let Some(v) = n
                .all_values()
                .find(|&v| !(-STATE_SLACK..=1.0 + STATE_SLACK).contains(&v))
            {
                return fail(format!("proportion {v} outside [0, 1]"));
            }
            for (j, total) in n.population().iter().enumerate() {
                if (total - 1.0).abs() > NORMALIZATION_TOL {
                    return fail(format!("s+i+r = {total} at node {j}"));
                }
            }
        }
    }
    Ok(())
}

fn check_initial(state: &FieldState, grid: &AgeGrid, rates: &GridRates) -> Result<()> {
    state.check_shape(grid)?;
    let population = state.population();
    let scale = rates.birth_rate.max(1.0);
    check_invariants(state, &population, scale, 0).map_err(|e| match e {
        Error::Invariant { detail, .. } | Error::NonFinite { detail, .. } => {
            Error::InvalidParameter(format!("initial state: {detail}"))
        }
        other => other,
    })
}

/// Run the selected variant over `[0, horizon]`, querying `controller` once
/// per step. The normalized forms use the stationary population `c(a)`.
pub fn simulate<C: FieldController + ?Sized>(
    initial: &FieldState,
    controller: &mut C,
    cfg: &SchemeConfig,
    rates: &VitalRates,
) -> Result<Trajectory> {
    let grid = cfg.grid;
    if initial.variant != cfg.variant {
        return Err(Error::InvalidParameter(format!(
            "initial state is {:?} but the scheme is configured for {:?}",
            initial.variant, cfg.variant
        )));
    }
    require_cfl(cfg, rates.alpha)?;
    let sampled = GridRates::new(rates, &grid);
    check_initial(initial, &grid, &sampled)?;

    let stationary = match cfg.variant {
        Variant::Raw => Vec::new(),
        _ => stationary_profile(rates, &grid)?,
    };
    let scale = sampled.birth_rate.max(1.0);
    // total population, evolved alongside the raw variant as a consistency check
    let mut population = initial.population();

    let steps = cfg.steps();
    let every = cfg.snapshot_every.max(1);
    let mut summary = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::with_capacity(steps / every + 2);
    let mut state = initial.clone();
    state.t = 0.0;

    for step in 0..=steps {
        let weight = if cfg.variant == Variant::Raw {
            &population
        } else {
            &stationary
        };
        summary.push(summarize(&state, weight, &grid));
        let theta = controller.theta(&state, &grid, &sampled)?;
        check_theta(&theta, &grid)?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                detail: "control field is not finite".into(),
            });
        }
        if step % every == 0 || step == steps {
            snapshots.push(Snapshot {
                state: state.clone(),
                theta: theta.clone(),
            });
        }
        if step == steps {
            break;
        }
        state = match cfg.variant {
            Variant::Raw => {
                population = step_population(&population, &sampled, cfg);
                step_raw(&state, &theta, &sampled, cfg)?
            }
            Variant::Normalized => step_normalized(&state, &theta, &stationary, &sampled, cfg)?,
            Variant::Homogeneous => step_homogeneous(&state, &theta, &stationary, &sampled, cfg)?,
        };
        // keep timestamps on the uniform lattice
        state.t = (step + 1) as f64 * cfg.dt;
        check_invariants(&state, &population, scale, step + 1)?;
    }

    Ok(Trajectory {
        variant: cfg.variant,
        grid,
        dt: cfg.dt,
        snapshots,
        summary,
    })
}

/// Upwind step of `(d_t + alpha d_a) P = -mu P`, `P(t, 0) = B`.
pub fn step_population(population: &[f64], rates: &GridRates, cfg: &SchemeConfig) -> Vec<f64> {
    let lambda = rates.alpha * cfg.dt / cfg.grid.step();
    let mut next = vec![rates.birth_rate; population.len()];
    for j in 1..population.len() {
        next[j] = population[j]
            - lambda * (population[j] - population[j - 1])
            - cfg.dt * rates.mu[j] * population[j];
    }
    next
}

/// `0.5e-3 * exp(-100 (a - 1/2)^2)`.
fn initial_bump(a: f64) -> f64 {
    0.5e-3 * (-100.0 * (a - 0.5).powi(2)).exp()
}

/// Built-in initial infected proportion: the bump shifted so it vanishes at
/// age 0, clipped at zero.
pub fn initial_infected(a: f64) -> f64 {
    (initial_bump(a) - initial_bump(0.0)).max(0.0)
}

/// Built-in normalized initial condition: `i0` as above, `s0 = 1 - i0`, `r0 = 0`.
pub fn initial_conditions_builtin(grid: &AgeGrid) -> FieldState {
    let infected: Vec<f64> = grid.nodes().into_iter().map(initial_infected).collect();
    FieldState {
        t: 0.0,
        variant: Variant::Normalized,
        susceptible: infected.iter().map(|i| 1.0 - i).collect(),
        recovered: vec![0.0; infected.len()],
        infected,
    }
}

/// The built-in initial condition in the requested variant; raw densities
/// use the stationary population.
pub fn initial_state(variant: Variant, rates: &VitalRates, grid: &AgeGrid) -> Result<FieldState> {
    let base = initial_conditions_builtin(grid);
    Ok(match variant {
        Variant::Normalized => base,
        Variant::Homogeneous => base.to_homogeneous(),
        Variant::Raw => base.to_raw(&stationary_profile(rates, grid)?)?,
    })
}
