//! Named scenarios behind `reproduce-figure`.
//!
//! * 2, 3: open-loop normalized field model, `beta0` = 600 and 800.
//! * 4, 5, 6: class model with 100 classes under the saturated switch law
//!   (infected, susceptible and control views of one run).
//! * 7, 8, 9: raw field model under the nonnegative field law
//!   (infected, susceptible and control views of one run).

use crate::error::{Error, Result};
use crate::pide::Variant;

use super::config::{ControllerConfig, IntegratorSection, ModelKind, ScenarioConfig, StopKind};

pub const FIGURES: std::ops::RangeInclusive<u8> = 2..=9;

pub fn open_loop(beta0: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.rates.beta0 = beta0;
    cfg
}

/// Same regime split at a fraction of the cost: `da = 0.02`, `dt = 0.002`, `T = 10`.
pub fn coarse_open_loop(beta0: f64) -> ScenarioConfig {
    let mut cfg = open_loop(beta0);
    cfg.grid.da = 0.02;
    cfg.scheme.dt = 0.002;
    cfg.scheme.horizon = 10.0;
    cfg
}

pub fn class_closed_loop() -> ScenarioConfig {
    ScenarioConfig {
        model: ModelKind::Ode,
        integrator: IntegratorSection {
            classes: 100,
            horizon: 5.0,
            stop: StopKind::Eradication,
            stop_tol: 1e-8,
            ..IntegratorSection::default()
        },
        controller: ControllerConfig::OdeFeedback {
            r1: 200.0,
            r2: 80.0,
            delta: 1e-6,
            saturate: true,
        },
        ..ScenarioConfig::default()
    }
}

/// The law's values reach a few thousand, so the time step sits well below
/// the transport limit.
pub fn field_closed_loop() -> ScenarioConfig {
    let mut cfg = ScenarioConfig {
        variant: Variant::Raw,
        controller: ControllerConfig::PideFeedback {
            gains: "positive".into(),
            delta: 1e-6,
            saturate: true,
        },
        ..ScenarioConfig::default()
    };
    cfg.scheme.dt = 2e-4;
    cfg.scheme.horizon = 1.0;
    cfg
}

pub fn figure(n: u8) -> Result<ScenarioConfig> {
    match n {
        2 => Ok(open_loop(600.0)),
        3 => Ok(open_loop(800.0)),
        4..=6 => Ok(class_closed_loop()),
        7..=9 => Ok(field_closed_loop()),
        _ => Err(Error::Config(format!(
            "no preset for figure {n} (available: 2 to 9)"
        ))),
    }
}

pub fn describe(n: u8) -> &'static str {
    match n {
        2 => "open loop, beta0 = 600: the infection dies out",
        3 => "open loop, beta0 = 800: the infection persists",
        4 => "class model closed loop: infected proportions",
        5 => "class model closed loop: susceptible proportions",
        6 => "class model closed loop: vaccination rates",
        7 => "field closed loop: infected density",
        8 => "field closed loop: susceptible density",
        9 => "field closed loop: vaccination field",
        _ => "unknown",
    }
}
