//! Scenario configuration (TOML). Every field has a default, so an empty
//! file describes the reference setup: `L = 1`, `T = 20`, `dt = 0.001`,
//! `da = 0.01`, built-in rates with `beta0 = 800`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::demography::{birth_rate_normalizing, AgeGrid, Profile, VitalRates};
use crate::error::{Error, Result};
use crate::ode::StopRule;
use crate::pide::{check_cfl, SchemeConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Pide,
    Ode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    /// `builtin` or `tabulated`.
    pub profile: String,
    pub beta0: f64,
    /// Sample ages for tabulated profiles.
    pub ages: Vec<f64>,
    pub mu: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Birth rate; computed so that the stationary population integrates to 1 when absent.
    pub birth_rate: Option<f64>,
    pub alpha: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            profile: "builtin".into(),
            beta0: 800.0,
            ages: Vec::new(),
            mu: Vec::new(),
            beta: Vec::new(),
            gamma: Vec::new(),
            birth_rate: None,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub max_age: f64,
    pub da: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            max_age: 1.0,
            da: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub dt: f64,
    pub horizon: f64,
    /// Steps between stored snapshots; about 200 snapshots when absent.
    pub snapshot_every: Option<usize>,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            dt: 0.001,
            horizon: 20.0,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    /// Run to the horizon.
    Horizon,
    /// Stop once `||dx/dt||_inf < stop_tol`.
    #[default]
    Stationary,
    /// Stop once every `i_k < stop_tol`.
    Eradication,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub classes: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub horizon: f64,
    pub stop: StopKind,
    pub stop_tol: f64,
    /// Minimum time between stored points.
    pub record_interval: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        Self {
            classes: 100,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            horizon: 20.0,
            stop: StopKind::Stationary,
            stop_tol: 1e-8,
            record_interval: 1e-3,
        }
    }
}

impl IntegratorSection {
    pub fn stop_rule(&self) -> StopRule {
        match self.stop {
            StopKind::Horizon => StopRule::Horizon,
            StopKind::Stationary => StopRule::Stationary(self.stop_tol),
            StopKind::Eradication => StopRule::InfectedBelow(self.stop_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerConfig {
    #[default]
    None,
    OdeFeedback {
        #[serde(default = "default_r1")]
        r1: f64,
        #[serde(default = "default_r2")]
        r2: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_true")]
        saturate: bool,
    },
    PideFeedback {
        /// Only `positive` (the nonnegative design) is available.
        #[serde(default = "default_gains")]
        gains: String,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_true")]
        saturate: bool,
    },
}

fn default_r1() -> f64 {
    200.0
}
fn default_r2() -> f64 {
    80.0
}
fn default_delta() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_gains() -> String {
    "positive".into()
}

/// Optional certificate constants; searched for when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CertificateConfig {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub k: Option<f64>,
    /// Norm of the boundary perturbation; `beta(0) B` when absent.
    pub d_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelKind,
    pub variant: Variant,
    pub rates: RatesConfig,
    pub grid: GridConfig,
    pub scheme: SchemeSection,
    pub integrator: IntegratorSection,
    pub controller: ControllerConfig,
    pub certificate: CertificateConfig,
    /// Constant stationary vaccination rate used for the reproduction number.
    pub equilibrium_vaccination: f64,
    /// Number of equal age bins in the aggregated infected output.
    pub bins: usize,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Pide,
            variant: Variant::Normalized,
            rates: RatesConfig::default(),
            grid: GridConfig::default(),
            scheme: SchemeSection::default(),
            integrator: IntegratorSection::default(),
            controller: ControllerConfig::None,
            certificate: CertificateConfig::default(),
            equilibrium_vaccination: 0.0,
            bins: 10,
            output_dir: None,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn age_grid(&self) -> Result<AgeGrid> {
        AgeGrid::with_step(self.grid.max_age, self.grid.da)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let mut s = SchemeConfig::new(
            self.scheme.dt,
            self.scheme.horizon,
            self.age_grid()?,
            self.variant,
        )?;
        if let Some(every) = self.scheme.snapshot_every {
            s.snapshot_every = every.max(1);
        }
        Ok(s)
    }

    /// Coefficients selected by the `[rates]` section.
    pub fn vital_rates(&self) -> Result<VitalRates> {
        let grid = self.age_grid()?;
        let r = &self.rates;
        let mut rates = match r.profile.as_str() {
            "builtin" => {
                if self.grid.max_age != 1.0 {
                    return Err(Error::Config(
                        "the built-in profile needs max_age = 1".into(),
                    ));
                }
                VitalRates::builtin(r.beta0, &grid)?
            }
            "tabulated" => {
                let table = |values: &[f64]| Profile::Tabulated {
                    ages: r.ages.clone(),
                    values: values.to_vec(),
                };
                let mut rates = VitalRates {
                    mortality: table(&r.mu),
                    transmission: table(&r.beta),
                    recovery: table(&r.gamma),
                    birth_rate: 1.0,
                    alpha: r.alpha,
                    max_age: self.grid.max_age,
                    clamp_age: grid.last_node(),
                };
                for (name, p) in [
                    ("mu", &rates.mortality),
                    ("beta", &rates.transmission),
                    ("gamma", &rates.recovery),
                ] {
                    p.validate(name).map_err(|e| Error::Config(e.to_string()))?;
                }
                let probe = rates.clone();
                let survival = |a: f64| {
                    if a >= probe.max_age {
                        // continue the clamped mortality up to L
                        let tail = probe
                            .cumulative_mortality(0.0, probe.max_age)
                            .unwrap_or(f64::NAN);
                        (-tail / probe.alpha).exp()
                    } else {
                        crate::demography::survival_by_quadrature(a, &probe).unwrap_or(f64::NAN)
                    }
                };
                rates.birth_rate = birth_rate_normalizing(survival, &grid)?;
                rates
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown rate profile '{other}' (builtin or tabulated)"
                )))
            }
        };
        if let Some(b) = r.birth_rate {
            rates.birth_rate = b;
        }
        rates.alpha = r.alpha;
        rates
            .validate(&grid)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.age_grid()?;
        if !(self.scheme.dt > 0.0 && self.scheme.horizon >= 0.0) {
            return Err(Error::Config(
                "scheme.dt must be positive and scheme.horizon >= 0".into(),
            ));
        }
        if self.model == ModelKind::Pide {
            let s = SchemeConfig::new(self.scheme.dt, self.scheme.horizon, grid, self.variant)?;
            let v = check_cfl(&s, self.rates.alpha);
            if !v.pass {
                return Err(Error::Cfl { ratio: v.ratio });
            }
        }
        match &self.controller {
            ControllerConfig::None => {}
            ControllerConfig::OdeFeedback { r1, r2, delta, .. } => {
                check_delta(*delta)?;
                if !(*r1 > 0.0 && *r2 > 0.0) {
                    return Err(Error::Config(format!(
                        "gain roots must be positive, got r1 = {r1}, r2 = {r2}"
                    )));
                }
                if self.model != ModelKind::Ode {
                    return Err(Error::Config("ode-feedback needs model = \"ode\"".into()));
                }
            }
            ControllerConfig::PideFeedback { gains, delta, .. } => {
                check_delta(*delta)?;
                if gains != "positive" {
                    return Err(Error::Config(format!(
                        "unknown gain source '{gains}' (positive)"
                    )));
                }
                if self.model != ModelKind::Pide {
                    return Err(Error::Config("pide-feedback needs model = \"pide\"".into()));
                }
            }
        }
        if self.integrator.classes == 0 {
            return Err(Error::Config(
                "integrator.classes must be at least 1".into(),
            ));
        }
        if !(self.integrator.rel_tol > 0.0 && self.integrator.abs_tol >= 0.0) {
            return Err(Error::Config(
                "integrator tolerances must be positive".into(),
            ));
        }
        let cells = match self.model {
            ModelKind::Pide => grid.len(),
            ModelKind::Ode => self.integrator.classes,
        };
        if self.bins == 0 || cells % self.bins != 0 {
            return Err(Error::Config(format!(
                "bins = {} must divide the {cells} age cells",
                self.bins
            )));
        }
        if !(self.equilibrium_vaccination >= 0.0) {
            return Err(Error::Config("equilibrium_vaccination must be >= 0".into()));
        }
        if self.rates.profile == "builtin" && !(self.rates.beta0 > 0.0) {
            return Err(Error::Config(format!(
                "rates.beta0 must be positive, got {}",
                self.rates.beta0
            )));
        }
        if !(self.rates.alpha > 0.0) {
            return Err(Error::Config(format!(
                "rates.alpha must be positive, got {}",
                self.rates.alpha
            )));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "controller.delta must lie in (0, 1), got {delta}"
        )))
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
