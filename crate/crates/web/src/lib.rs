//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The exported functions return flat `Float64Array`s so the page can plot
//! them without any glue beyond the generated module. Everything here avoids
//! wall-clock timers, which are unavailable on `wasm32-unknown-unknown`.

use wasm_bindgen::prelude::*;

use agesir::control::class_law::{ClassFeedback, OdeGains};
use agesir::demography::{AgeGrid, VitalRates};
use agesir::equilibria::basic_reproduction_number;
use agesir::ode::{
    build_class_params, integrate_adaptive, project_initial_state, uniform_edges, OdeRunOptions,
    StopRule,
};
use agesir::pide::{
    initial_conditions_builtin, initial_infected, simulate, NoControl, SchemeConfig, Variant,
};

fn reference_grid(da: f64) -> agesir::Result<AgeGrid> {
    AgeGrid::with_step(1.0, da)
}

/// Reproduction number of the built-in rates without vaccination.
pub fn r0_for(beta0: f64) -> agesir::Result<f64> {
    let grid = reference_grid(0.01)?;
    let rates = VitalRates::builtin(beta0, &grid)?;
    basic_reproduction_number(&rates, &vec![0.0; grid.len()], &grid)
}

/// `[t_0, I_0, t_1, I_1, ...]` for an uncontrolled normalized run on the
/// coarse grid (`da = 0.02`, `dt = 0.002`).
pub fn open_loop_series(beta0: f64, horizon: f64) -> agesir::Result<Vec<f64>> {
    let grid = reference_grid(0.02)?;
    let rates = VitalRates::builtin(beta0, &grid)?;
    let cfg = SchemeConfig::new(0.002, horizon, grid, Variant::Normalized)?;
    let traj = simulate(
        &initial_conditions_builtin(&grid),
        &mut NoControl,
        &cfg,
        &rates,
    )?;
    let every = (traj.summary.len() / 400).max(1);
    Ok(traj
        .summary
        .iter()
        .step_by(every)
        .flat_map(|r| [r.t, r.total_i])
        .collect())
}

/// `[t_0, Z_0, t_1, Z_1, ...]` for the class model under the saturated
/// switch law, where `Z = sum_k N_k i_k`. Stops once every class is below 1e-8.
pub fn class_closed_loop_series(
    beta0: f64,
    classes: usize,
    r1: f64,
    r2: f64,
) -> agesir::Result<Vec<f64>> {
    let grid = reference_grid(0.01)?;
    let rates = VitalRates::builtin(beta0, &grid)?;
    let cp = build_class_params(&uniform_edges(1.0, classes), &rates)?;
    let x0 = project_initial_state(&cp, &rates, initial_infected)?;
    let mut law = ClassFeedback::new(OdeGains::uniform(classes, r1, r2)?, 1e-6, true)?;
    let opts = OdeRunOptions {
        horizon: 2.0,
        stop: StopRule::InfectedBelow(1e-8),
        record_interval: 1e-3,
        ..OdeRunOptions::default()
    };
    let traj = integrate_adaptive(&x0, &mut law, &cp, &opts, &[])?;
    Ok(traj
        .points
        .iter()
        .flat_map(|p| [p.t, p.state.force(&cp)])
        .collect())
}

fn to_js<T>(r: agesir::Result<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn reproduction_number(beta0: f64) -> Result<f64, JsError> {
    to_js(r0_for(beta0))
}

#[wasm_bindgen]
pub fn open_loop_infected(beta0: f64, horizon: f64) -> Result<Vec<f64>, JsError> {
    to_js(open_loop_series(beta0, horizon))
}

#[wasm_bindgen]
pub fn class_closed_loop(
    beta0: f64,
    classes: usize,
    r1: f64,
    r2: f64,
) -> Result<Vec<f64>, JsError> {
    to_js(class_closed_loop_series(beta0, classes, r1, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_between_the_two_reference_values() {
        assert!(r0_for(600.0).unwrap() < 1.0);
        assert!(r0_for(800.0).unwrap() > 1.0);
    }

    #[test]
    fn series_are_pairs() {
        let s = open_loop_series(800.0, 1.0).unwrap();
        assert_eq!(s.len() % 2, 0);
        assert_eq!(s[0], 0.0);
        let c = class_closed_loop_series(800.0, 20, 200.0, 80.0).unwrap();
        assert!(c[c.len() - 1] < c[1]);
    }
}
