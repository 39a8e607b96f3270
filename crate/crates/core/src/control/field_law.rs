//! Vaccination law for the age-continuous model and its linearizing
//! coordinates `(I_bar, S_bar)`.

use serde::Serialize;

use crate::control::class_law::check_threshold;
use crate::demography::{AgeGrid, VitalRates};
use crate::error::{Error, Result};
use crate::pide::{FieldController, FieldState, GridRates, Variant};
use crate::quadrature::trapezoid_product;

/// `h(a) = beta'(a) / beta(a)`.
pub fn h_func(a: f64, rates: &VitalRates) -> Result<f64> {
    let beta = rates.beta(a);
    if beta == 0.0 {
        return Err(Error::InvalidParameter(format!(
            "transmission vanishes at age {a}"
        )));
    }
    Ok(rates.beta_derivative(a) / beta)
}

/// `g(a) = -beta (d/da)((gamma + mu) / beta) = -(gamma' + mu') + (gamma + mu) h`.
pub fn g_func(a: f64, rates: &VitalRates) -> Result<f64> {
    let h = h_func(a, rates)?;
    Ok(-(rates.gamma_derivative(a) + rates.mu_derivative(a)) + (rates.gamma(a) + rates.mu(a)) * h)
}

pub fn g_profile(rates: &VitalRates, grid: &AgeGrid) -> Result<Vec<f64>> {
    grid.nodes().into_iter().map(|a| g_func(a, rates)).collect()
}

pub fn h_profile(rates: &VitalRates, grid: &AgeGrid) -> Result<Vec<f64>> {
    grid.nodes().into_iter().map(|a| h_func(a, rates)).collect()
}

/// Age-dependent gains of the field law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PideGains {
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    /// Grid supremum of the mortality.
    pub mortality_sup: f64,
    /// Grid supremum of the recovery rate.
    pub recovery_sup: f64,
    pub total_population: f64,
}

impl PideGains {
    fn check(&self, grid: &AgeGrid) -> Result<()> {
        for (what, v) in [("gain alpha1", &self.alpha1), ("gain alpha2", &self.alpha2)] {
            if v.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: grid.len(),
                    got: v.len(),
                });
            }
        }
        Ok(())
    }
}

/// Gains that make the law nonnegative:
/// `alpha2 = 3 nu + 2 Gamma + beta(a) N` and
/// `alpha1 = -(mu + gamma)(mu + gamma - alpha2)`, with `nu`, `Gamma` the grid
/// suprema of the mortality and recovery rates.
pub fn positive_gain_design(rates: &GridRates, beta: &[f64], total_population: f64) -> PideGains {
    let nu = rates.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gamma_sup = rates
        .gamma
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let alpha2: Vec<f64> = beta
        .iter()
        .map(|b| 3.0 * nu + 2.0 * gamma_sup + b * total_population)
        .collect();
    let alpha1 = alpha2
        .iter()
        .zip(rates.mu.iter().zip(&rates.gamma))
        .map(|(a2, (mu, gamma))| -((mu + gamma) * (mu + gamma - a2)))
        .collect();
    PideGains {
        alpha1,
        alpha2,
        mortality_sup: nu,
        recovery_sup: gamma_sup,
        total_population,
    }
}

/// The field law evaluated on a raw state.
///
/// `Theta = alpha2 + int beta S - 2 mu - gamma - beta int I - int (mu + gamma) I / int I
///          + I / (beta S int I) * (alpha1 + (mu + gamma)(mu + gamma - alpha2))`.
///
/// The last term is skipped wherever its bracket or `I` vanishes, which is
/// everywhere for [`positive_gain_design`].
pub fn pide_feedback(
    state: &FieldState,
    rates: &GridRates,
    gains: &PideGains,
    grid: &AgeGrid,
) -> Result<Vec<f64>> {
    if state.variant != Variant::Raw {
        return Err(Error::InvalidParameter(
            "the field law expects a raw state".into(),
        ));
    }
    gains.check(grid)?;
    let h = grid.step();
    let (s, i) = (&state.susceptible, &state.infected);
    let total_i = grid.integrate(i);
    if !(total_i > 0.0) {
        return Err(Error::DivisionGuard {
            node: 0,
            detail: format!("integral of the infected density is {total_i}"),
        });
    }
    let exposure = trapezoid_product(&rates.beta, s, h);
    let removal: Vec<f64> = rates
        .mu
        .iter()
        .zip(&rates.gamma)
        .map(|(m, g)| m + g)
        .collect();
    let mean_removal = trapezoid_product(&removal, i, h) / total_i;
    let mut theta = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (mu, gamma, beta) = (rates.mu[j], rates.gamma[j], rates.beta[j]);
        let mut value =
            gains.alpha2[j] + exposure - 2.0 * mu - gamma - beta * total_i - mean_removal;
        let bracket = gains.alpha1[j] + removal[j] * (removal[j] - gains.alpha2[j]);
        if bracket != 0.0 && i[j] != 0.0 {
            let denom = beta * s[j] * total_i;
            if !(denom > 0.0) {
                return Err(Error::DivisionGuard {
                    node: j,
                    detail: format!("beta * S = {} at age {}", beta * s[j], grid.node(j)),
                });
            }
            value += i[j] / denom * bracket;
        }
        theta.push(value);
    }
    Ok(theta)
}

/// Linearizing coordinates of a raw state.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub i_bar: Vec<f64>,
    pub s_bar: Vec<f64>,
}

/// `I_bar = I`, `S_bar = -(gamma + mu) I + beta S int I`.
pub fn pide_normal_form(
    state: &FieldState,
    rates: &GridRates,
    grid: &AgeGrid,
) -> Result<NormalForm> {
    if state.variant != Variant::Raw {
        return Err(Error::InvalidParameter(
            "normal form coordinates need a raw state".into(),
        ));
    }
    let (s, i) = (&state.susceptible, &state.infected);
    if s.len() != grid.len() || i.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "state for the normal form",
            expected: grid.len(),
            got: s.len().min(i.len()),
        });
    }
    let total_i = grid.integrate(i);
    let s_bar = (0..grid.len())
        .map(|j| -(rates.gamma[j] + rates.mu[j]) * i[j] + rates.beta[j] * s[j] * total_i)
        .collect();
    Ok(NormalForm {
        i_bar: i.clone(),
        s_bar,
    })
}

/// Inverse of [`pide_normal_form`]: returns `(S, I)`.
pub fn pide_normal_form_inverse(
    nf: &NormalForm,
    rates: &GridRates,
    grid: &AgeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let total_i = grid.integrate(&nf.i_bar);
    if total_i == 0.0 {
        return Err(Error::DivisionGuard {
            node: 0,
            detail: "integral of I_bar vanishes".into(),
        });
    }
    let mut s = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        if rates.beta[j] == 0.0 {
            return Err(Error::DivisionGuard {
                node: j,
                detail: "transmission vanishes".into(),
            });
        }
        s.push(
            (nf.s_bar[j] + (rates.gamma[j] + rates.mu[j]) * nf.i_bar[j])
                / (rates.beta[j] * total_i),
        );
    }
    Ok((s, nf.i_bar.clone()))
}

/// Field law with the switch-off latch, for use inside [`crate::pide::simulate`].
#[derive(Debug, Clone)]
pub struct FieldFeedback {
    pub gains: PideGains,
    pub delta: f64,
    pub saturate: bool,
    /// Total population used to turn proportions into densities.
    population: Option<Vec<f64>>,
    latched: bool,
    switch_time: Option<f64>,
    /// Smallest law value before saturation, over all active steps.
    pub min_theta: f64,
    /// Smallest `Theta - int beta S` over all active steps.
    pub min_margin: f64,
}

impl FieldFeedback {
    pub fn new(
        gains: PideGains,
        delta: f64,
        saturate: bool,
        population: Option<Vec<f64>>,
    ) -> Result<Self> {
        check_threshold(delta)?;
        Ok(Self {
            gains,
            delta,
            saturate,
            population,
            latched: false,
            switch_time: None,
            min_theta: f64::INFINITY,
            min_margin: f64::INFINITY,
        })
    }

    pub fn switch_time(&self) -> Option<f64> {
        self.switch_time
    }
}

impl FieldController for FieldFeedback {
    fn theta(&mut self, state: &FieldState, grid: &AgeGrid, rates: &GridRates) -> Result<Vec<f64>> {
        let raw = match state.variant {
            Variant::Raw => state.clone(),
            _ => {
                let p = self.population.as_ref().ok_or_else(|| {
                    Error::InvalidParameter(
                        "the field law needs the population to convert proportions".into(),
                    )
                })?;
                state.to_raw(p)?
            }
        };
        if !self.latched && grid.integrate(&raw.infected) < self.delta {
            self.latched = true;
            self.switch_time = Some(state.t);
        }
        if self.latched {
            return Ok(vec![0.0; grid.len()]);
        }
        let theta = pide_feedback(&raw, rates, &self.gains, grid)?;
        let exposure = trapezoid_product(&rates.beta, &raw.susceptible, grid.step());
        for v in &theta {
            self.min_theta = self.min_theta.min(*v);
            self.min_margin = self.min_margin.min(v - exposure);
        }
        Ok(if self.saturate {
            theta.iter().map(|v| v.max(0.0)).collect()
        } else {
            theta
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demography::Profile;
    use approx::assert_relative_eq;

    #[test]
    fn h_and_g_vanish_for_constant_profiles() {
        let rates = VitalRates {
            mortality: Profile::constant(0.3),
            transmission: Profile::constant(5.0),
            recovery: Profile::constant(2.0),
            birth_rate: 1.0,
            alpha: 1.0,
            max_age: 1.0,
            clamp_age: 1.0,
        };
        for a in [0.0, 0.4, 0.9] {
            assert_eq!(h_func(a, &rates).unwrap(), 0.0);
            assert_eq!(g_func(a, &rates).unwrap(), 0.0);
        }
        let mut zero = rates.clone();
        zero.transmission = Profile::constant(0.0);
        assert!(h_func(0.5, &zero).is_err());
    }

    #[test]
    fn builtin_derivatives_match_finite_differences() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let rates = VitalRates::builtin(800.0, &grid).unwrap();
        let a = 0.5;
        let eps = 1e-5;
        let ratio = |x: f64| (rates.gamma(x) + rates.mu(x)) / rates.beta(x);
        let g_fd = -rates.beta(a) * (ratio(a + eps) - ratio(a - eps)) / (2.0 * eps);
        let h_fd = (rates.beta(a + eps) - rates.beta(a - eps)) / (2.0 * eps) / rates.beta(a);
        assert!((g_func(a, &rates).unwrap() - g_fd).abs() < 1e-6);
        assert!((h_func(a, &rates).unwrap() - h_fd).abs() < 1e-6);
    }

    #[test]
    fn positive_design_values() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let rates = VitalRates::builtin(800.0, &grid).unwrap();
        let sampled = GridRates::new(&rates, &grid);
        let gains = positive_gain_design(&sampled, &sampled.beta, 1.0);
        assert_eq!(gains.recovery_sup, 100.0);
        assert_relative_eq!(gains.mortality_sup, 1000.0, max_relative = 1e-9);
        for j in 0..grid.len() {
            let r = sampled.mu[j] + sampled.gamma[j];
            assert_eq!(gains.alpha1[j] + r * (r - gains.alpha2[j]), 0.0);
        }
    }

    #[test]
    fn normal_form_of_disease_free_state() {
        let grid = AgeGrid::with_step(1.0, 0.1).unwrap();
        let rates = GridRates::new(
            &VitalRates::builtin(800.0, &AgeGrid::with_step(1.0, 0.1).unwrap()).unwrap(),
            &grid,
        );
        let state = FieldState {
            t: 0.0,
            variant: Variant::Raw,
            susceptible: vec![1.0; 10],
            infected: vec![0.0; 10],
            recovered: vec![0.0; 10],
        };
        let nf = pide_normal_form(&state, &rates, &grid).unwrap();
        assert!(nf.i_bar.iter().chain(&nf.s_bar).all(|&v| v == 0.0));
        assert!(pide_normal_form_inverse(&nf, &rates, &grid).is_err());
    }

    #[test]
    fn normal_form_round_trip() {
        let grid = AgeGrid::with_step(1.0, 0.1).unwrap();
        let rates = GridRates::new(&VitalRates::builtin(600.0, &grid).unwrap(), &grid);
        let state = FieldState {
            t: 0.0,
            variant: Variant::Raw,
            susceptible: (0..10).map(|j| 1.2 - 0.05 * j as f64).collect(),
            infected: (0..10)
                .map(|j| 0.01 + 0.002 * (j as f64).sin().abs())
                .collect(),
            recovered: vec![0.0; 10],
        };
        let nf = pide_normal_form(&state, &rates, &grid).unwrap();
        let (s, i) = pide_normal_form_inverse(&nf, &rates, &grid).unwrap();
        for j in 0..10 {
            assert_relative_eq!(s[j], state.susceptible[j], max_relative = 1e-10);
            assert_eq!(i[j], state.infected[j]);
        }
    }

    #[test]
    fn guards() {
        let grid = AgeGrid::with_step(1.0, 0.1).unwrap();
        let rates = GridRates::new(&VitalRates::builtin(600.0, &grid).unwrap(), &grid);
        let gains = PideGains {
            alpha1: vec![1.0; 10],
            alpha2: vec![1.0; 10],
            mortality_sup: 0.0,
            recovery_sup: 0.0,
            total_population: 1.0,
        };
        let mut state = FieldState {
            t: 0.0,
            variant: Variant::Raw,
            susceptible: vec![1.0; 10],
            infected: vec![0.0; 10],
            recovered: vec![0.0; 10],
        };
        assert!(matches!(
            pide_feedback(&state, &rates, &gains, &grid),
            Err(Error::DivisionGuard { .. })
        ));
        state.infected[4] = 0.1;
        state.susceptible[4] = 0.0;
        assert!(matches!(
            pide_feedback(&state, &rates, &gains, &grid),
            Err(Error::DivisionGuard { node: 4, .. })
        ));
    }
}
