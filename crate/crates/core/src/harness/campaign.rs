//! Randomized check that nonnegative vaccination keeps the class model
//! inside `{s, i >= 0, s + i <= 1}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::demography::VitalRates;
use crate::error::Result;
use crate::ode::{
    build_class_params, integrate_adaptive, uniform_edges, OdeRunOptions, OdeState,
    PiecewiseConstant, StopRule,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CampaignSettings {
    pub trials: usize,
    pub classes: usize,
    pub horizon: f64,
    /// Length of each constant piece of the random control.
    pub period: f64,
    pub max_theta: f64,
    pub seed: u64,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            classes: 20,
            horizon: 1.0,
            period: 0.1,
            max_theta: 200.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub trials: usize,
    /// Trials whose state left the simplex by more than the slack.
    pub exits: usize,
    pub worst_violation: f64,
    pub slack: f64,
}

/// Uniform point of the triangle `{s, i >= 0, s + i <= 1}`.
fn simplex_point(rng: &mut impl Rng) -> (f64, f64) {
    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    (lo, hi - lo)
}

pub fn positivity_campaign(
    rates: &VitalRates,
    settings: &CampaignSettings,
) -> Result<CampaignReport> {
    const SLACK: f64 = 1e-6;
    let cp = build_class_params(&uniform_edges(rates.max_age, settings.classes), rates)?;
    let n = cp.len();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let pieces = (settings.horizon / settings.period).ceil() as usize;
    let opts = OdeRunOptions {
        horizon: settings.horizon,
        stop: StopRule::Horizon,
        record_interval: settings.horizon,
        ..OdeRunOptions::default()
    };
    let mut report = CampaignReport {
        trials: settings.trials,
        exits: 0,
        worst_violation: 0.0,
        slack: SLACK,
    };
    for _ in 0..settings.trials {
        let (s, i): (Vec<f64>, Vec<f64>) = (0..n).map(|_| simplex_point(&mut rng)).unzip();
        let x0 = OdeState { s, i };
        let values = (0..pieces)
            .map(|_| {
                (0..n)
                    .map(|_| rng.gen_range(0.0..settings.max_theta))
                    .collect()
            })
            .collect();
        let mut control = PiecewiseConstant {
            period: settings.period,
            values,
        };
        let breaks = control.breakpoints(settings.horizon);
        let traj = integrate_adaptive(&x0, &mut control, &cp, &opts, &breaks)?;
        report.worst_violation = report.worst_violation.max(traj.max_violation);
        if traj.left_simplex.is_some() {
            report.exits += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (s, i) = simplex_point(&mut rng);
            assert!(s >= 0.0 && i >= 0.0 && s + i <= 1.0);
        }
    }
}
