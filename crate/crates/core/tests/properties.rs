use proptest::prelude::*;

use agesir::control::certificate::{growth_bound, stability_conditions, GainSuprema};
use agesir::control::class_law::{saturate_nonneg, switch_off};
use agesir::control::field_law::{pide_normal_form, pide_normal_form_inverse};
use agesir::demography::{AgeGrid, VitalRates};
use agesir::equilibria::basic_reproduction_number;
use agesir::harness::output::{aggregate_age_bins, fmt, uniform_bin_edges};
use agesir::ode::{
    build_class_params, integrate_adaptive, uniform_edges, OdeRunOptions, OdeState,
    PiecewiseConstant, StopRule,
};
use agesir::pide::{
    coupling_integral, simulate, FieldState, FixedControl, GridRates, SchemeConfig, Variant,
};

fn coarse() -> (AgeGrid, VitalRates) {
    let grid = AgeGrid::with_step(1.0, 0.05).unwrap();
    let rates = VitalRates::builtin(800.0, &grid).unwrap();
    (grid, rates)
}

/// `(s, i)` inside the triangle with `s + i <= 1`.
fn simplex_pairs(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), n).prop_map(|v| {
        v.into_iter()
            .map(|(a, b)| {
                if a + b <= 1.0 {
                    (a, b)
                } else {
                    (1.0 - a, 1.0 - b)
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalized_runs_stay_on_the_simplex(
        pairs in simplex_pairs(20),
        theta in prop::collection::vec(0.0..50.0f64, 20),
    ) {
        let (grid, rates) = coarse();
        let mut pairs = pairs;
        pairs[0] = (1.0, 0.0);
        let state = FieldState {
            t: 0.0,
            variant: Variant::Normalized,
            susceptible: pairs.iter().map(|p| p.0).collect(),
            infected: pairs.iter().map(|p| p.1).collect(),
            recovered: pairs.iter().map(|p| 1.0 - p.0 - p.1).collect(),
        };
        let cfg = SchemeConfig::new(0.002, 0.5, grid, Variant::Normalized).unwrap();
        // simulate checks ranges and s + i + r = 1 at every step
        let traj = simulate(&state, &mut FixedControl(theta), &cfg, &rates);
        prop_assert!(traj.is_ok(), "{:?}", traj.err());
    }

    #[test]
    fn raw_runs_stay_nonnegative_and_conserve_population(
        pairs in simplex_pairs(20),
        theta in prop::collection::vec(0.0..50.0f64, 20),
    ) {
        let (grid, rates) = coarse();
        let c = agesir::demography::stationary_profile(&rates, &grid).unwrap();
        let mut pairs = pairs;
        pairs[0] = (1.0, 0.0);
        let state = FieldState {
            t: 0.0,
            variant: Variant::Raw,
            susceptible: pairs.iter().zip(&c).map(|(p, c)| p.0 * c).collect(),
            infected: pairs.iter().zip(&c).map(|(p, c)| p.1 * c).collect(),
            recovered: pairs.iter().zip(&c).map(|(p, c)| (1.0 - p.0 - p.1) * c).collect(),
        };
        // mortality reaches 100 at the last node of this grid
        let cfg = SchemeConfig::new(0.002, 0.5, grid, Variant::Raw).unwrap();
        let traj = simulate(&state, &mut FixedControl(theta), &cfg, &rates);
        prop_assert!(traj.is_ok(), "{:?}", traj.err());
        prop_assert!(traj.unwrap().summary.iter().all(|r| r.min_state >= -1e-12));
    }

    #[test]
    fn class_model_keeps_the_simplex(
        pairs in simplex_pairs(8),
        pieces in prop::collection::vec(prop::collection::vec(0.0..100.0f64, 8), 4),
    ) {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let rates = VitalRates::builtin(800.0, &grid).unwrap();
        let cp = build_class_params(&uniform_edges(1.0, 8), &rates).unwrap();
        let x0 = OdeState {
            s: pairs.iter().map(|p| p.0).collect(),
            i: pairs.iter().map(|p| p.1).collect(),
        };
        let mut control = PiecewiseConstant { period: 0.1, values: pieces };
        let opts = OdeRunOptions { horizon: 0.4, stop: StopRule::Horizon, ..OdeRunOptions::default() };
        let breaks = control.breakpoints(0.4);
        let traj = integrate_adaptive(&x0, &mut control, &cp, &opts, &breaks).unwrap();
        prop_assert!(traj.left_simplex.is_none(), "{:?}", traj.left_simplex);
    }

    #[test]
    fn saturation_is_idempotent_and_nonnegative(u in prop::collection::vec(-1e3..1e3f64, 0..30)) {
        let once = saturate_nonneg(&u);
        prop_assert_eq!(saturate_nonneg(&once), once.clone());
        for (a, b) in u.iter().zip(&once) {
            prop_assert!(*b >= 0.0);
            if *a >= 0.0 { prop_assert_eq!(a, b); }
        }
    }

    #[test]
    fn switch_off_latches_at_first_crossing(totals in prop::collection::vec(0.0..2.0f64, 1..40), delta in 0.01..0.99f64) {
        let mut latched = false;
        let first = totals.iter().position(|&t| t < delta);
        for (m, &total) in totals.iter().enumerate() {
            let out = switch_off(&[1.0, 2.0], total, delta, &mut latched);
            match first {
                Some(k) if m >= k => prop_assert_eq!(out, vec![0.0, 0.0]),
                _ => prop_assert_eq!(out, vec![1.0, 2.0]),
            }
        }
    }

    #[test]
    fn age_bins_add_up(field in prop::collection::vec(0.0..10.0f64, 100), weight in prop::collection::vec(0.0..2.0f64, 100)) {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let whole = aggregate_age_bins(&field, Some(&weight), &[0.0, 1.0], &grid).unwrap()[0];
        prop_assert!((whole - coupling_integral(&field, &weight, &grid).unwrap()).abs() <= 1e-12 * whole.max(1.0));
        let bins = aggregate_age_bins(&field, Some(&weight), &uniform_bin_edges(&grid, 10), &grid).unwrap();
        let sum: f64 = bins.iter().sum();
        prop_assert!((sum - whole).abs() <= 1e-12 * whole.max(1.0));
    }

    #[test]
    fn reproduction_number_is_monotone(beta0 in 10.0..2000.0f64, bump in 1.0..3.0f64, theta in prop::collection::vec(0.0..5.0f64, 100), extra in prop::collection::vec(0.0..5.0f64, 100)) {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let r = |b: f64, th: &[f64]| basic_reproduction_number(&VitalRates::builtin(b, &grid).unwrap(), th, &grid).unwrap();
        let base = r(beta0, &theta);
        prop_assert!(r(beta0 * bump, &theta) >= base);
        let larger: Vec<f64> = theta.iter().zip(&extra).map(|(a, b)| a + b).collect();
        prop_assert!(r(beta0, &larger) <= base);
    }

    #[test]
    fn normal_form_round_trip(s in prop::collection::vec(0.01..2.0f64, 20), i in prop::collection::vec(0.01..1.0f64, 20)) {
        let (grid, rates) = coarse();
        let sampled = GridRates::new(&rates, &grid);
        let state = FieldState { t: 0.0, variant: Variant::Raw, susceptible: s.clone(), infected: i.clone(), recovered: vec![0.0; 20] };
        let nf = pide_normal_form(&state, &sampled, &grid).unwrap();
        let (s2, i2) = pide_normal_form_inverse(&nf, &sampled, &grid).unwrap();
        for j in 0..20 {
            prop_assert!((s2[j] - s[j]).abs() <= 1e-10 * s[j].max(1.0));
            prop_assert_eq!(i2[j], i[j]);
        }
    }

    #[test]
    fn certified_constants_give_negative_growth(
        c1 in 0.0..20.0f64, c2 in 0.0..20.0f64, k in 0.01..20.0f64, d in 0.0..5.0f64,
        stiffness in -10.0..10.0f64, damping in -10.0..10.0f64,
    ) {
        let v = stability_conditions(c1, c2, k, d, GainSuprema { stiffness, damping }).unwrap();
        if v.certified {
            prop_assert!(growth_bound(c1, c2, k, d) < 0.0);
        }
    }

    #[test]
    fn csv_numbers_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt(v).parse::<f64>().unwrap(), v);
    }
}
