//! Age grid, coefficient profiles and the demographic primitives: mortality,
//! survival, birth normalization and the total population density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, trapezoid};

const FN_QUAD_TOL: f64 = 1e-13;

/// Half-open uniform age grid `a_j = j * da`, `j = 0..n`, covering `[0, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeGrid {
    max_age: f64,
    len: usize,
    step: f64,
}

impl AgeGrid {
    pub fn new(max_age: f64, len: usize) -> Result<Self> {
        if !(max_age > 0.0 && max_age.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "maximum age must be positive, got {max_age}"
            )));
        }
        if len < 2 {
            return Err(Error::InvalidParameter(format!(
                "age grid needs at least 2 nodes, got {len}"
            )));
        }
        Ok(Self {
            max_age,
            len,
            step: max_age / len as f64,
        })
    }

    /// Grid from a step size; `max_age / step` must be (close to) an integer.
    pub fn with_step(max_age: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "age step must be positive, got {step}"
            )));
        }
        let n = (max_age / step).round();
        if ((n * step) - max_age).abs() > 1e-9 * max_age {
            return Err(Error::InvalidParameter(format!(
                "age step {step} does not divide the maximum age {max_age}"
            )));
        }
        Self::new(max_age, n as usize)
    }

    pub fn max_age(&self) -> f64 {
        self.max_age
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.node(j)).collect()
    }

    /// Last grid node, `L - da`. Singular coefficients are clamped here.
    pub fn last_node(&self) -> f64 {
        self.node(self.len - 1)
    }

    pub fn contains(&self, a: f64) -> bool {
        (0.0..self.max_age).contains(&a)
    }

    pub(crate) fn check_age(&self, a: f64) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::AgeDomain {
                age: a,
                max: self.max_age,
            })
        }
    }

    /// Integral over `[0, L)` of a field sampled on the grid nodes.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.step)
    }
}

/// An age-dependent coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `1 / (10 (1 - a)^2)`, singular at `a = 1`.
    InverseSquareMortality,
    /// `beta0 (sin(a) e^{-2a} + 1/100)`.
    SineDecayTransmission {
        beta0: f64,
    },
    /// Piecewise-linear interpolation of samples at strictly increasing ages.
    Tabulated {
        ages: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn value(&self, a: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::InverseSquareMortality => 1.0 / (10.0 * (1.0 - a).powi(2)),
            Profile::SineDecayTransmission { beta0 } => beta0 * (a.sin() * (-2.0 * a).exp() + 0.01),
            Profile::Tabulated { ages, values } => interpolate(ages, values, a),
        }
    }

    /// Derivative in age: analytic for the closed-form profiles, centered
    /// differences on the table for tabulated ones.
    pub fn derivative(&self, a: f64) -> f64 {
        match self {
            Profile::Constant { .. } => 0.0,
            Profile::InverseSquareMortality => 1.0 / (5.0 * (1.0 - a).powi(3)),
            Profile::SineDecayTransmission { beta0 } => {
                beta0 * (-2.0 * a).exp() * (a.cos() - 2.0 * a.sin())
            }
            Profile::Tabulated { ages, values } => {
                let slopes = node_slopes(ages, values);
                interpolate(ages, &slopes, a)
            }
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self, Profile::Tabulated { .. })
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        if let Profile::Tabulated { ages, values } = self {
            if ages.len() != values.len() {
                return Err(Error::LengthMismatch {
                    what: "tabulated profile",
                    expected: ages.len(),
                    got: values.len(),
                });
            }
            if ages.len() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "{name}: table needs at least 2 samples"
                )));
            }
            if ages.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "{name}: table ages must increase strictly"
                )));
            }
        }
        Ok(())
    }
}

fn interpolate(ages: &[f64], values: &[f64], a: f64) -> f64 {
    let n = ages.len();
    if a <= ages[0] {
        return values[0];
    }
    if a >= ages[n - 1] {
        return values[n - 1];
    }
    let k = ages.partition_point(|&x| x <= a) - 1;
    let w = (a - ages[k]) / (ages[k + 1] - ages[k]);
    values[k] * (1.0 - w) + values[k + 1] * w
}

fn node_slopes(ages: &[f64], values: &[f64]) -> Vec<f64> {
    let n = ages.len();
    (0..n)
        .map(|j| {
            let (l, r) = match j {
                0 => (0, 1),
                j if j == n - 1 => (n - 2, n - 1),
                j => (j - 1, j + 1),
            };
            (values[r] - values[l]) / (ages[r] - ages[l])
        })
        .collect()
}

/// Demographic and epidemic coefficients of the age-structured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalRates {
    pub mortality: Profile,
    pub transmission: Profile,
    pub recovery: Profile,
    /// Constant birth rate `B`.
    pub birth_rate: f64,
    /// Time/age unit balancing coefficient.
    pub alpha: f64,
    pub max_age: f64,
    /// Ages above this are evaluated at this age (mortality is singular at `L`).
    pub clamp_age: f64,
}

impl VitalRates {
    /// The built-in parameter set: `mu = 1/(10(1-a)^2)`, `gamma = 100`,
    /// `beta = beta0 (sin(a) e^{-2a} + 1/100)`, `L = 1`, `alpha = 1`, and
    /// `B = 1 / int_0^1 l` so that the stationary population integrates to one.
    pub fn builtin(beta0: f64, grid: &AgeGrid) -> Result<Self> {
        if !(beta0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta0 must be positive, got {beta0}"
            )));
        }
        if (grid.max_age() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "the built-in profile is defined for a maximum age of 1".into(),
            ));
        }
        let birth_rate = birth_rate_normalizing(survival_closed_form, grid)?;
        Ok(Self {
            mortality: Profile::InverseSquareMortality,
            transmission: Profile::SineDecayTransmission { beta0 },
            recovery: Profile::constant(100.0),
            birth_rate,
            alpha: 1.0,
            max_age: grid.max_age(),
            clamp_age: grid.last_node(),
        })
    }

    pub fn mu(&self, a: f64) -> f64 {
        self.mortality.value(a.min(self.clamp_age))
    }

    pub fn beta(&self, a: f64) -> f64 {
        self.transmission.value(a)
    }

    pub fn gamma(&self, a: f64) -> f64 {
        self.recovery.value(a)
    }

    pub fn mu_derivative(&self, a: f64) -> f64 {
        if a > self.clamp_age {
            0.0
        } else {
            self.mortality.derivative(a)
        }
    }

    pub fn beta_derivative(&self, a: f64) -> f64 {
        self.transmission.derivative(a)
    }

    pub fn gamma_derivative(&self, a: f64) -> f64 {
        self.recovery.derivative(a)
    }

    /// `beta(0) * B`, the bound on the mollified boundary perturbation.
    pub fn boundary_coupling_norm(&self) -> f64 {
        self.beta(0.0) * self.birth_rate
    }

    pub fn validate(&self, grid: &AgeGrid) -> Result<()> {
        self.mortality.validate("mortality")?;
        self.transmission.validate("transmission")?;
        self.recovery.validate("recovery")?;
        if !(self.birth_rate > 0.0 && self.birth_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "birth rate must be positive, got {}",
                self.birth_rate
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        for a in grid.nodes() {
            for (name, v) in [
                ("mu", self.mu(a)),
                ("beta", self.beta(a)),
                ("gamma", self.gamma(a)),
            ] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{name}({a}) = {v} must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<F: Fn(&Self, f64) -> f64>(&self, grid: &AgeGrid, f: F) -> Vec<f64> {
        grid.nodes().into_iter().map(|a| f(self, a)).collect()
    }

    /// `int_a0^a1 mu` by adaptive quadrature of the clamped mortality.
    pub fn cumulative_mortality(&self, a0: f64, a1: f64) -> Result<f64> {
        adaptive_simpson(|x| self.mu(x), a0, a1, FN_QUAD_TOL)
    }
}

/// Built-in mortality rate on the grid, clamped at the last node.
pub fn mortality_rate(a: f64, grid: &AgeGrid) -> Result<f64> {
    grid.check_age(a)?;
    Ok(Profile::InverseSquareMortality.value(a.min(grid.last_node())))
}

pub(crate) fn survival_closed_form(a: f64) -> f64 {
    (-a / (10.0 * (1.0 - a))).exp()
}

/// Built-in survival probability `l(a) = exp(-a / (10 (1 - a)))` on `[0, 1)`.
pub fn survival_function(a: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::AgeDomain { age: a, max: 1.0 });
    }
    Ok(survival_closed_form(a))
}

/// Survival `exp(-(1/alpha) int_0^a mu)` by quadrature of the clamped mortality.
pub fn survival_by_quadrature(a: f64, rates: &VitalRates) -> Result<f64> {
    if !(0.0..rates.max_age).contains(&a) {
        return Err(Error::AgeDomain {
            age: a,
            max: rates.max_age,
        });
    }
    Ok((-rates.cumulative_mortality(0.0, a)? / rates.alpha).exp())
}

/// `B = 1 / int_0^L l(a) da` by the trapezoid rule on the grid nodes plus the
/// endpoint `L`, where `l` is evaluated as its limit (0 for the built-in).
pub fn birth_rate_normalizing<F: Fn(f64) -> f64>(survival: F, grid: &AgeGrid) -> Result<f64> {
    let samples: Vec<f64> = (0..=grid.len()).map(|j| survival(grid.node(j))).collect();
    if let Some((j, v)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Quadrature(format!(
            "survival is {v} at age {}",
            grid.node(j)
        )));
    }
    let total = trapezoid(&samples, grid.step());
    if !(total > 0.0) {
        return Err(Error::Quadrature(format!("survival integrates to {total}")));
    }
    Ok(1.0 / total)
}

/// Built-in transmission coefficient `beta0 (sin(a) e^{-2a} + 1/100)`.
pub fn transmission_rate(a: f64, beta0: f64, grid: &AgeGrid) -> Result<f64> {
    grid.check_age(a)?;
    if !(beta0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta0 must be positive, got {beta0}"
        )));
    }
    Ok(Profile::SineDecayTransmission { beta0 }.value(a))
}

/// Total population density by the method of characteristics.
pub fn population_density<F>(t: f64, a: f64, initial: F, rates: &VitalRates) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be >= 0, got {t}"
        )));
    }
    if !(0.0..rates.max_age).contains(&a) {
        return Err(Error::AgeDomain {
            age: a,
            max: rates.max_age,
        });
    }
    let alpha = rates.alpha;
    if t > a / alpha {
        Ok(rates.birth_rate * (-rates.cumulative_mortality(0.0, a)? / alpha).exp())
    } else {
        let foot = a - alpha * t;
        Ok(initial(foot) * (-rates.cumulative_mortality(foot, a)? / alpha).exp())
    }
}

/// Stationary density `c(a) = B exp(-(1/alpha) int_0^a mu)`.
pub fn stationary_density(a: f64, rates: &VitalRates) -> Result<f64> {
    Ok(rates.birth_rate * survival_by_quadrature(a, rates)?)
}

/// `c` sampled on every grid node, accumulating the mortality integral cell by cell.
pub fn stationary_profile(rates: &VitalRates, grid: &AgeGrid) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    for j in 0..grid.len() {
        if j > 0 {
            acc += rates.cumulative_mortality(grid.node(j - 1), grid.node(j))?;
        }
        out.push(rates.birth_rate * (-acc / rates.alpha).exp());
    }
    Ok(out)
}

/// Total population of a density over `[0, L)`: trapezoid on the grid.
pub fn total_population(density: &[f64], grid: &AgeGrid) -> f64 {
    grid.integrate(density)
}
