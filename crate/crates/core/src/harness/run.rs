//! Scenario pipelines behind the CLI: simulations, the reproduction number,
//! gain tables and the stability certificate.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::control::certificate::{
    find_certified_constants, growth_bound, riccati_with_retry, stability_conditions, GainSuprema,
    StabilityVerdict,
};
use crate::control::class_law::{ClassFeedback, OdeGains};
use crate::control::field_law::{
    g_profile, h_profile, positive_gain_design, FieldFeedback, PideGains,
};
use crate::demography::{stationary_profile, AgeGrid, VitalRates};
use crate::equilibria::{basic_reproduction_number, classify_stability};
use crate::error::{Error, Result};
use crate::ode::{
    build_class_params, integrate_adaptive, project_initial_state, uniform_edges, ClassController,
    ClassParams, OdeRunOptions, OdeTrajectory, Uncontrolled,
};
use crate::pide::{
    initial_infected, initial_state, simulate, FieldController, FieldState, GridRates, NoControl,
    Trajectory, Variant,
};
use crate::rk::StepControl;

use super::config::{ControllerConfig, ModelKind, ScenarioConfig};
use super::output::{
    aggregate_age_bins, aggregate_classes, uniform_bin_edges, write_field, write_json, write_rows,
    write_rows_to,
};

/// Machine-readable summary written as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub model: ModelKind,
    pub variant: Option<Variant>,
    pub controlled: bool,
    pub r0: f64,
    pub classification: &'static str,
    pub endemic_equilibrium_exists: bool,
    /// Closed loop: the switch-off threshold was reached. Open-loop field
    /// runs: `int I` moved by less than 1e-3 of its peak over the last 5% of
    /// the horizon. Class runs: the configured stop rule fired.
    pub converged: bool,
    pub initial_total_infected: f64,
    pub final_total_infected: f64,
    pub final_time: f64,
    pub wall_time_s: f64,
    pub switch_time: Option<f64>,
    /// Smallest control value actually applied.
    pub min_applied_theta: f64,
    /// Smallest value of the feedback law before saturation.
    pub min_law_value: Option<f64>,
    /// Smallest `Theta(t, a) - int beta S` while the field law was active.
    pub min_exposure_margin: Option<f64>,
    /// Largest exit from the class simplex.
    pub max_simplex_violation: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub field: Option<Trajectory>,
    pub classes: Option<(ClassParams, OdeTrajectory)>,
}

/// Reproduction number of the configured rates under the constant
/// stationary vaccination `equilibrium_vaccination`.
pub fn scenario_r0(cfg: &ScenarioConfig, rates: &VitalRates, grid: &AgeGrid) -> Result<f64> {
    basic_reproduction_number(rates, &vec![cfg.equilibrium_vaccination; grid.len()], grid)
}

#[derive(Debug, Clone, Serialize)]
pub struct R0Report {
    pub r0: f64,
    pub classification: &'static str,
    pub endemic_equilibrium_exists: bool,
    pub birth_rate: f64,
    pub wall_time_s: f64,
}

pub fn reproduction_number(cfg: &ScenarioConfig) -> Result<R0Report> {
    let start = Instant::now();
    let grid = cfg.age_grid()?;
    let rates = cfg.vital_rates()?;
    let r0 = scenario_r0(cfg, &rates, &grid)?;
    let c = classify_stability(r0)?;
    Ok(R0Report {
        r0,
        classification: c.label(),
        endemic_equilibrium_exists: c.endemic_exists(),
        birth_rate: rates.birth_rate,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Records the smallest applied control.
struct Recorded<'a, C: ?Sized> {
    inner: &'a mut C,
    min: f64,
}

impl<C: FieldController + ?Sized> FieldController for Recorded<'_, C> {
    fn theta(&mut self, state: &FieldState, grid: &AgeGrid, rates: &GridRates) -> Result<Vec<f64>> {
        let theta = self.inner.theta(state, grid, rates)?;
        self.min = theta.iter().copied().fold(self.min, f64::min);
        Ok(theta)
    }
}

/// Nonnegative gains for the configured rates, with `N = int c`.
pub fn design_for(rates: &VitalRates, grid: &AgeGrid) -> Result<PideGains> {
    let sampled = GridRates::new(rates, grid);
    let population = grid.integrate(&stationary_profile(rates, grid)?);
    Ok(positive_gain_design(&sampled, &sampled.beta, population))
}

pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let out_dir = out_dir.or(cfg.output_dir.as_deref());
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let grid = cfg.age_grid()?;
    let rates = cfg.vital_rates()?;
    let r0 = scenario_r0(cfg, &rates, &grid)?;
    let class = classify_stability(r0)?;
    let mut outcome = match cfg.model {
        ModelKind::Pide => run_field(cfg, &rates, &grid, out_dir)?,
        ModelKind::Ode => run_classes(cfg, &rates, out_dir)?,
    };
    let report = &mut outcome.report;
    report.r0 = r0;
    report.classification = class.label();
    report.endemic_equilibrium_exists = class.endemic_exists();
    report.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        report.files.push("report.json".into());
        write_json(&dir.join("report.json"), &*report)?;
    }
    Ok(outcome)
}

fn blank_report(cfg: &ScenarioConfig) -> RunReport {
    RunReport {
        model: cfg.model,
        variant: (cfg.model == ModelKind::Pide).then_some(cfg.variant),
        controlled: cfg.controller != ControllerConfig::None,
        r0: f64::NAN,
        classification: "",
        endemic_equilibrium_exists: false,
        converged: false,
        initial_total_infected: f64::NAN,
        final_total_infected: f64::NAN,
        final_time: 0.0,
        wall_time_s: 0.0,
        switch_time: None,
        min_applied_theta: f64::INFINITY,
        min_law_value: None,
        min_exposure_margin: None,
        max_simplex_violation: None,
        files: Vec::new(),
    }
}

fn settled(totals: &[f64]) -> bool {
    let n = totals.len();
    if n < 2 {
        return true;
    }
    let tail = &totals[n - 1 - (n / 20).max(1).min(n - 1)..];
    let peak = totals.iter().copied().fold(0.0, f64::max);
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-3 * peak
}

fn run_field(
    cfg: &ScenarioConfig,
    rates: &VitalRates,
    grid: &AgeGrid,
    out_dir: Option<&Path>,
) -> Result<RunOutcome> {
    let scheme = cfg.scheme_config()?;
    let initial = initial_state(cfg.variant, rates, grid)?;
    let stationary = stationary_profile(rates, grid)?;
    let mut report = blank_report(cfg);

    let traj = match &cfg.controller {
        ControllerConfig::PideFeedback {
            delta, saturate, ..
        } => {
            let population = (cfg.variant != Variant::Raw).then(|| stationary.clone());
            let mut law =
                FieldFeedback::new(design_for(rates, grid)?, *delta, *saturate, population)?;
            let mut rec = Recorded {
                inner: &mut law,
                min: f64::INFINITY,
            };
            let traj = simulate(&initial, &mut rec, &scheme, rates)?;
            report.min_applied_theta = rec.min;
            report.switch_time = law.switch_time();
            report.converged = law.switch_time().is_some();
            report.min_law_value = Some(law.min_theta);
            report.min_exposure_margin = Some(law.min_margin);
            traj
        }
        ControllerConfig::None => {
            let traj = simulate(&initial, &mut NoControl, &scheme, rates)?;
            report.min_applied_theta = 0.0;
            report.converged = settled(&traj.total_infected());
            traj
        }
        ControllerConfig::OdeFeedback { .. } => {
            return Err(Error::Config("ode-feedback needs model = \"ode\"".into()));
        }
    };
    let totals = traj.total_infected();
    report.initial_total_infected = totals[0];
    report.final_total_infected = *totals.last().expect("at least one summary row");
    report.final_time = traj.final_state().t;

    if let Some(dir) = out_dir {
        let ages = grid.nodes();
        let frames = |pick: fn(&FieldState) -> &Vec<f64>| {
            traj.snapshots
                .iter()
                .map(move |s| (s.state.t, pick(&s.state).as_slice()))
        };
        write_field(
            &dir.join("susceptible.csv"),
            "a",
            "value",
            &ages,
            frames(|s| &s.susceptible),
        )?;
        write_field(
            &dir.join("infected.csv"),
            "a",
            "value",
            &ages,
            frames(|s| &s.infected),
        )?;
        write_field(
            &dir.join("recovered.csv"),
            "a",
            "value",
            &ages,
            frames(|s| &s.recovered),
        )?;
        write_field(
            &dir.join("control.csv"),
            "a",
            "theta",
            &ages,
            traj.snapshots
                .iter()
                .map(|s| (s.state.t, s.theta.as_slice())),
        )?;
        write_rows(
            &dir.join("summary.csv"),
            &[
                "t",
                "total_I",
                "total_S",
                "total_R",
                "min_state",
                "max_state",
            ],
            traj.summary.iter().map(|r| {
                [
                    r.t,
                    r.total_i,
                    r.total_s,
                    r.total_r,
                    r.min_state,
                    r.max_state,
                ]
            }),
        )?;
        let edges = uniform_bin_edges(grid, cfg.bins);
        let mut rows = Vec::new();
        for s in &traj.snapshots {
            let (field, weight) = match s.state.variant {
                Variant::Raw => (s.state.infected.clone(), None),
                _ => (
                    s.state.to_normalized().infected,
                    Some(stationary.as_slice()),
                ),
            };
            let bins = aggregate_age_bins(&field, weight, &edges, grid)?;
            for (m, v) in bins.into_iter().enumerate() {
                rows.push([s.state.t, edges[m], edges[m + 1], v]);
            }
        }
        write_rows(
            &dir.join("infected_bins.csv"),
            &["t", "a_lo", "a_hi", "value"],
            rows,
        )?;
        report.files.extend(
            [
                "susceptible.csv",
                "infected.csv",
                "recovered.csv",
                "control.csv",
                "summary.csv",
                "infected_bins.csv",
            ]
            .map(String::from),
        );
    }
    Ok(RunOutcome {
        report,
        field: Some(traj),
        classes: None,
    })
}

/// Class parameters and initial state for the configured class model.
pub fn class_setup(
    cfg: &ScenarioConfig,
    rates: &VitalRates,
) -> Result<(ClassParams, crate::ode::OdeState)> {
    let cp = build_class_params(
        &uniform_edges(cfg.grid.max_age, cfg.integrator.classes),
        rates,
    )?;
    let x0 = project_initial_state(&cp, rates, initial_infected)?;
    Ok((cp, x0))
}

pub fn class_options(cfg: &ScenarioConfig) -> OdeRunOptions {
    let it = &cfg.integrator;
    OdeRunOptions {
        horizon: it.horizon,
        step: StepControl {
            rel_tol: it.rel_tol,
            abs_tol: it.abs_tol,
            ..StepControl::default()
        },
        stop: it.stop_rule(),
        record_interval: it.record_interval,
        sample_times: Vec::new(),
    }
}

fn run_classes(
    cfg: &ScenarioConfig,
    rates: &VitalRates,
    out_dir: Option<&Path>,
) -> Result<RunOutcome> {
    let (cp, x0) = class_setup(cfg, rates)?;
    let opts = class_options(cfg);
    let mut report = blank_report(cfg);
    let traj = match &cfg.controller {
        ControllerConfig::OdeFeedback {
            r1,
            r2,
            delta,
            saturate,
        } => {
            let gains = OdeGains::uniform(cp.len(), *r1, *r2)?;
            let mut law = ClassFeedback::new(gains.clone(), *delta, *saturate)?;
            let traj = integrate_adaptive(&x0, &mut law, &cp, &opts, &[])?;
            report.switch_time = law.switch_time();
            if !saturate {
                report.min_law_value = Some(traj.min_theta);
            }
            traj
        }
        ControllerConfig::None => integrate_adaptive(
            &x0,
            &mut Uncontrolled as &mut dyn ClassController,
            &cp,
            &opts,
            &[],
        )?,
        ControllerConfig::PideFeedback { .. } => {
            return Err(Error::Config("pide-feedback needs model = \"pide\"".into()));
        }
    };
    report.converged = traj.converged;
    report.min_applied_theta = traj.min_theta;
    report.max_simplex_violation = Some(traj.max_violation);
    report.initial_total_infected = x0.force(&cp);
    let last = traj.final_point();
    report.final_total_infected = last.state.force(&cp);
    report.final_time = traj.final_time;

    if let Some(dir) = out_dir {
        let ks: Vec<f64> = (1..=cp.len()).map(|k| k as f64).collect();
        write_field(
            &dir.join("susceptible.csv"),
            "k",
            "value",
            &ks,
            traj.points.iter().map(|p| (p.t, p.state.s.as_slice())),
        )?;
        write_field(
            &dir.join("infected.csv"),
            "k",
            "value",
            &ks,
            traj.points.iter().map(|p| (p.t, p.state.i.as_slice())),
        )?;
        let recovered: Vec<(f64, Vec<f64>)> = traj
            .points
            .iter()
            .map(|p| {
                (
                    p.t,
                    p.state
                        .s
                        .iter()
                        .zip(&p.state.i)
                        .map(|(s, i)| 1.0 - s - i)
                        .collect(),
                )
            })
            .collect();
        write_field(
            &dir.join("recovered.csv"),
            "k",
            "value",
            &ks,
            recovered.iter().map(|(t, r)| (*t, r.as_slice())),
        )?;
        write_field(
            &dir.join("control.csv"),
            "k",
            "theta",
            &ks,
            traj.points.iter().map(|p| (p.t, p.theta.as_slice())),
        )?;
        let weighted = |v: &[f64]| cp.population.iter().zip(v).map(|(n, x)| n * x).sum::<f64>();
        let rows = traj.points.iter().zip(&recovered).map(|(p, (_, r))| {
            let (lo, hi) = p
                .state
                .s
                .iter()
                .chain(&p.state.i)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            [
                p.t,
                weighted(&p.state.i),
                weighted(&p.state.s),
                weighted(r),
                lo,
                hi,
            ]
        });
        write_rows(
            &dir.join("summary.csv"),
            &[
                "t",
                "total_I",
                "total_S",
                "total_R",
                "min_state",
                "max_state",
            ],
            rows,
        )?;
        let per = cp.len() / cfg.bins;
        let bin_edges: Vec<f64> = (0..=cfg.bins).map(|m| cp.edges[m * per]).collect();
        let mut rows = Vec::new();
        for p in &traj.points {
            let bins = aggregate_classes(&p.state.i, &cp.population, &cp.edges, &bin_edges)?;
            for (m, v) in bins.into_iter().enumerate() {
                rows.push([p.t, bin_edges[m], bin_edges[m + 1], v]);
            }
        }
        write_rows(
            &dir.join("infected_bins.csv"),
            &["t", "a_lo", "a_hi", "value"],
            rows,
        )?;
        report.files.extend(
            [
                "susceptible.csv",
                "infected.csv",
                "recovered.csv",
                "control.csv",
                "summary.csv",
                "infected_bins.csv",
            ]
            .map(String::from),
        );
    }
    Ok(RunOutcome {
        report,
        field: None,
        classes: Some((cp, traj)),
    })
}

/// Gain profiles of the field law and the auxiliary functions `g`, `h`.
#[derive(Debug, Clone, Serialize)]
pub struct GainTable {
    pub ages: Vec<f64>,
    pub gains: PideGains,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn design_gains(cfg: &ScenarioConfig) -> Result<GainTable> {
    let grid = cfg.age_grid()?;
    let rates = cfg.vital_rates()?;
    Ok(GainTable {
        ages: grid.nodes(),
        gains: design_for(&rates, &grid)?,
        g: g_profile(&rates, &grid)?,
        h: h_profile(&rates, &grid)?,
    })
}

impl GainTable {
    /// Columns `a, alpha1, alpha2, g, h`.
    pub fn write_csv<W: std::io::Write>(&self, sink: W) -> Result<()> {
        let rows = (0..self.ages.len()).map(|j| {
            [
                self.ages[j],
                self.gains.alpha1[j],
                self.gains.alpha2[j],
                self.g[j],
                self.h[j],
            ]
        });
        write_rows_to(sink, &["a", "alpha1", "alpha2", "g", "h"], rows)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// `K = sup |kappa|`.
    pub k: f64,
    pub kappa_initial: f64,
    pub failed_kappa_initials: Vec<f64>,
    /// `beta(0) B`.
    pub boundary_norm: f64,
    pub d_norm: f64,
    pub suprema: GainSuprema,
    /// `None` when neither configured nor found.
    pub constants: Option<(f64, f64)>,
    pub verdict: Option<StabilityVerdict>,
    pub growth_bound: Option<f64>,
    pub certified: bool,
}

pub fn check_stability(cfg: &ScenarioConfig) -> Result<StabilityReport> {
    let table = design_gains(cfg)?;
    let grid = cfg.age_grid()?;
    let rates = cfg.vital_rates()?;
    let sup =
        GainSuprema::from_profiles(&table.gains.alpha1, &table.gains.alpha2, &table.g, &table.h)?;
    // kappa' = -kappa^2 + H kappa - G with G = g - alpha1 and H = h - alpha2
    let big_g: Vec<f64> = table
        .g
        .iter()
        .zip(&table.gains.alpha1)
        .map(|(g, a)| g - a)
        .collect();
    let big_h: Vec<f64> = table
        .h
        .iter()
        .zip(&table.gains.alpha2)
        .map(|(h, a)| h - a)
        .collect();
    let kappa = riccati_with_retry(&big_g, &big_h, &grid)?;
    let k = kappa.bound;
    let boundary_norm = rates.boundary_coupling_norm();
    let c = &cfg.certificate;
    let d_norm = c.d_norm.unwrap_or(boundary_norm);
    let k = c.k.unwrap_or(k);
    let constants = match (c.c1, c.c2) {
        (Some(c1), Some(c2)) => Some((c1, c2)),
        (None, None) => find_certified_constants(k, boundary_norm, sup)?,
        _ => {
            return Err(Error::Config(
                "certificate.c1 and certificate.c2 must be given together".into(),
            ))
        }
    };
    let verdict = constants
        .map(|(c1, c2)| stability_conditions(c1, c2, k, boundary_norm, sup))
        .transpose()?;
    Ok(StabilityReport {
        k,
        kappa_initial: kappa.initial,
        failed_kappa_initials: kappa.failed_initials,
        boundary_norm,
        d_norm,
        suprema: sup,
        constants,
        growth_bound: constants.map(|(c1, c2)| growth_bound(c1, c2, k, d_norm)),
        certified: verdict.is_some_and(|v| v.certified),
        verdict,
    })
}
