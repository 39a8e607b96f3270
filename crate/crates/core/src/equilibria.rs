//! Basic reproduction number, disease-free equilibrium and its stability
//! classification.

use serde::Serialize;

use crate::demography::{stationary_profile, AgeGrid, VitalRates};
use crate::error::{Error, Result};
use crate::quadrature::{
    adaptive_simpson, cumulative_trapezoid, fitted_exponential_cell, trapezoid_product,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    /// `R0 <= 1`: the disease-free equilibrium is the only one and is stable.
    DiseaseFreeStable,
    /// `R0 > 1`: the disease-free equilibrium is unstable and a stable endemic one exists.
    EndemicStable,
}

impl Classification {
    pub fn endemic_exists(self) -> bool {
        self == Classification::EndemicStable
    }

    pub fn label(self) -> &'static str {
        match self {
            Classification::DiseaseFreeStable => "DFE-stable",
            Classification::EndemicStable => "DFE-unstable-endemic-stable",
        }
    }
}

pub fn classify_stability(r0: f64) -> Result<Classification> {
    if !(r0.is_finite() && r0 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "R0 must be finite and >= 0, got {r0}"
        )));
    }
    Ok(if r0 <= 1.0 {
        Classification::DiseaseFreeStable
    } else {
        Classification::EndemicStable
    })
}

/// `exp(-int_0^b gamma)`.
pub fn gamma_survival(b: f64, rates: &VitalRates) -> Result<f64> {
    if !(0.0..=rates.max_age).contains(&b) {
        return Err(Error::AgeDomain {
            age: b,
            max: rates.max_age,
        });
    }
    Ok((-adaptive_simpson(|x| rates.gamma(x), 0.0, b, 1e-12)?).exp())
}

fn check_profile(theta_star: &[f64], grid: &AgeGrid) -> Result<()> {
    if theta_star.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "equilibrium control profile",
            expected: grid.len(),
            got: theta_star.len(),
        });
    }
    if let Some((node, &value)) = theta_star.iter().enumerate().find(|(_, &v)| !(v >= 0.0)) {
        return Err(Error::NegativeControl { node, value });
    }
    Ok(())
}

/// Basic reproduction number for a stationary vaccination profile.
///
/// The inner integral `J(b) = int_0^b beta(s) e^{-int_0^s theta} e^{-int_s^b gamma} ds`
/// is accumulated cell by cell with the exponential kernel integrated exactly
/// (product integration); the ratio of recovery survivals is never formed
/// explicitly. The outer integral against `c` uses the trapezoid rule.
pub fn basic_reproduction_number(
    rates: &VitalRates,
    theta_star: &[f64],
    grid: &AgeGrid,
) -> Result<f64> {
    check_profile(theta_star, grid)?;
    let c = stationary_profile(rates, grid)?;
    let h = grid.step();
    let vaccinated = cumulative_trapezoid(theta_star, h);
    let forcing: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&vaccinated)
        .map(|(&a, v)| rates.beta(a) * (-v).exp())
        .collect();
    let gamma = rates.sample(grid, VitalRates::gamma);
    let mut inner = vec![0.0; grid.len()];
    for j in 1..grid.len() {
        let decay = 0.5 * h * (gamma[j - 1] + gamma[j]);
        inner[j] = inner[j - 1] * (-decay).exp()
            + fitted_exponential_cell(forcing[j - 1], forcing[j], decay, h);
    }
    let r0 = trapezoid_product(&c, &inner, h);
    if !r0.is_finite() {
        return Err(Error::Quadrature(format!(
            "reproduction number evaluated to {r0}"
        )));
    }
    Ok(r0)
}

/// `(s*, i*) = (exp(-int_0^a theta*), 0)` on the grid.
pub fn disease_free_equilibrium(
    theta_star: &[f64],
    grid: &AgeGrid,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_profile(theta_star, grid)?;
    let s = cumulative_trapezoid(theta_star, grid.step())
        .into_iter()
        .map(|v| (-v).exp())
        .collect();
    Ok((s, vec![0.0; grid.len()]))
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub r0: f64,
    pub classification: Classification,
    pub endemic_exists: bool,
    pub dfe_s: Vec<f64>,
    pub dfe_i: Vec<f64>,
}

pub fn equilibrium_report(
    rates: &VitalRates,
    theta_star: &[f64],
    grid: &AgeGrid,
) -> Result<EquilibriumReport> {
    let r0 = basic_reproduction_number(rates, theta_star, grid)?;
    let classification = classify_stability(r0)?;
    let (dfe_s, dfe_i) = disease_free_equilibrium(theta_star, grid)?;
    Ok(EquilibriumReport {
        r0,
        classification,
        endemic_exists: classification.endemic_exists(),
        dfe_s,
        dfe_i,
    })
}
