//! Exponential stability certificate of the field law: the three gain
//! inequalities, the resulting growth bound, and the Riccati profile that
//! supplies the constant `K`.

use serde::Serialize;

use crate::demography::AgeGrid;
use crate::error::{Error, Result};
use crate::rk::{self, Flow, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Inequality {
    pub value: f64,
    /// Strict lower bound for the first two, upper bound for the third.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityVerdict {
    /// `c1 > max{1, sup(alpha1 - g), beta(0) B / K}`.
    pub c1_lower: Inequality,
    /// `c2 > max{0, beta(0) B (1 + K c1) / (1 + beta(0) B) - K, sup(alpha2 - h)}`.
    pub c2_lower: Inequality,
    /// `c2 <= K (c1 - 1)`.
    pub c2_upper: Inequality,
    pub certified: bool,
}

/// Suprema over the grid that enter the inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainSuprema {
    /// `sup (alpha1 - g)`.
    pub stiffness: f64,
    /// `sup (alpha2 - h)`.
    pub damping: f64,
}

impl GainSuprema {
    pub fn from_profiles(alpha1: &[f64], alpha2: &[f64], g: &[f64], h: &[f64]) -> Result<Self> {
        let n = alpha1.len();
        for (what, len) in [
            ("alpha2 profile", alpha2.len()),
            ("g profile", g.len()),
            ("h profile", h.len()),
        ] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        let sup = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x - y)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        Ok(Self {
            stiffness: sup(alpha1, g),
            damping: sup(alpha2, h),
        })
    }
}

fn check_k(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "K must be positive and finite, got {k}"
        )))
    }
}

/// Evaluate each inequality separately.
pub fn stability_conditions(
    c1: f64,
    c2: f64,
    k: f64,
    boundary_norm: f64,
    sup: GainSuprema,
) -> Result<StabilityVerdict> {
    check_k(k)?;
    let c1_bound = 1f64.max(sup.stiffness).max(boundary_norm / k);
    let c2_bound = 0f64
        .max(boundary_norm * (1.0 + k * c1) / (1.0 + boundary_norm) - k)
        .max(sup.damping);
    let c2_cap = k * (c1 - 1.0);
    let c1_lower = Inequality {
        value: c1,
        bound: c1_bound,
        holds: c1 > c1_bound,
    };
    let c2_lower = Inequality {
        value: c2,
        bound: c2_bound,
        holds: c2 > c2_bound,
    };
    let c2_upper = Inequality {
        value: c2,
        bound: c2_cap,
        holds: c2 <= c2_cap,
    };
    Ok(StabilityVerdict {
        certified: c1_lower.holds && c2_lower.holds && c2_upper.holds,
        c1_lower,
        c2_lower,
        c2_upper,
    })
}

/// `omega = -(c2 + K) + (1 + K (c1 - 1) - c2) * d_norm`.
pub fn growth_bound(c1: f64, c2: f64, k: f64, d_norm: f64) -> f64 {
    -(c2 + k) + (1.0 + k * (c1 - 1.0) - c2) * d_norm
}

/// Search for certifying constants: `c1` grows geometrically from just
/// above its lower bound, and `c2` is the midpoint of its admissible
/// interval once that interval opens.
pub fn find_certified_constants(
    k: f64,
    boundary_norm: f64,
    sup: GainSuprema,
) -> Result<Option<(f64, f64)>> {
    check_k(k)?;
    let start = 1f64.max(sup.stiffness).max(boundary_norm / k);
    let mut c1 = start + start.abs().max(1.0) * 1e-3;
    for _ in 0..200 {
        let lower = 0f64
            .max(boundary_norm * (1.0 + k * c1) / (1.0 + boundary_norm) - k)
            .max(sup.damping);
        let upper = k * (c1 - 1.0);
        if lower < upper {
            let c2 = 0.5 * (lower + upper);
            if c2 > lower && stability_conditions(c1, c2, k, boundary_norm, sup)?.certified {
                return Ok(Some((c1, c2)));
            }
        }
        c1 *= 1.5;
        if !c1.is_finite() {
            break;
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiSolution {
    pub kappa: Vec<f64>,
    /// `sup |kappa|` over the grid.
    pub bound: f64,
    pub initial: f64,
    /// Initial values tried before this one succeeded.
    pub failed_initials: Vec<f64>,
}

const BLOW_UP: f64 = 1e10;

fn interpolate(profile: &[f64], grid: &AgeGrid, a: f64) -> f64 {
    let x = (a / grid.step()).max(0.0);
    let j = (x.floor() as usize).min(profile.len() - 2);
    let w = (x - j as f64).clamp(0.0, 1.0);
    profile[j] * (1.0 - w) + profile[j + 1] * w
}

/// Integrate `d kappa / da = -kappa^2 + H kappa - G` from `kappa(0) = kappa0`
/// over the grid (coefficients linearly interpolated between nodes).
pub fn riccati_kappa(g: &[f64], h: &[f64], kappa0: f64, grid: &AgeGrid) -> Result<RiccatiSolution> {
    for (what, v) in [("Riccati G profile", g), ("Riccati H profile", h)] {
        if v.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: grid.len(),
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("{what} is not finite")));
        }
    }
    let nodes = grid.nodes();
    let end = grid.last_node();
    let mut kappa = vec![kappa0];
    let mut blown: Option<f64> = None;
    let ctl = StepControl {
        rel_tol: 1e-10,
        abs_tol: 1e-12,
        h_init: grid.step() * 1e-2,
        h_max: grid.step(),
        ..StepControl::default()
    };
    let result = rk::integrate(
        |a, y, dy| {
            dy[0] = -y[0] * y[0] + interpolate(h, grid, a) * y[0] - interpolate(g, grid, a);
            Ok(())
        },
        0.0,
        &[kappa0],
        end,
        &ctl,
        &nodes[1..],
        |a, y| {
            if !(y[0].abs() < BLOW_UP) {
                blown = Some(a);
                return Ok(Flow::Stop);
            }
            if nodes[1..].contains(&a) || a == end {
                kappa.push(y[0]);
            }
            Ok(Flow::Continue)
        },
    );
    match result {
        Err(Error::StepUnderflow { t, .. }) => return Err(Error::RiccatiBlowUp { age: t }),
        Err(e) => return Err(e),
        Ok(_) => {}
    }
    if let Some(age) = blown {
        return Err(Error::RiccatiBlowUp { age });
    }
    kappa.truncate(grid.len());
    let bound = kappa.iter().map(|k| k.abs()).fold(0.0, f64::max);
    Ok(RiccatiSolution {
        kappa,
        bound,
        initial: kappa0,
        failed_initials: Vec::new(),
    })
}

/// Initial values tried in order until one gives a bounded profile.
pub const KAPPA_INITIALS: [f64; 11] = [
    0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0, 1e3, -1e3, 1e4, -1e4,
];

pub fn riccati_with_retry(g: &[f64], h: &[f64], grid: &AgeGrid) -> Result<RiccatiSolution> {
    let mut failed = Vec::new();
    let mut last_age = 0.0;
    for &k0 in &KAPPA_INITIALS {
        match riccati_kappa(g, h, k0, grid) {
            Ok(mut sol) => {
                sol.failed_initials = failed;
                return Ok(sol);
            }
            Err(Error::RiccatiBlowUp { age }) => {
                failed.push(k0);
                last_age = age;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::RiccatiBlowUp { age: last_age })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn worked_instance() {
        let sup = GainSuprema {
            stiffness: 0.0,
            damping: 0.0,
        };
        let v = stability_conditions(3.0, 1.0, 1.0, 1.0, sup).unwrap();
        assert!(v.c1_lower.holds);
        assert!(!v.c2_lower.holds);
        assert_eq!(v.c2_lower.bound, 1.0);
        let v = stability_conditions(3.0, 1.5, 1.0, 1.0, sup).unwrap();
        assert!(v.certified);
        assert_eq!(v.c2_upper.bound, 2.0);
        assert_eq!(growth_bound(3.0, 1.5, 1.0, 1.0), -1.0);
        assert_eq!(growth_bound(3.0, 1.5, 1.0, 0.0), -2.5);
    }

    #[test]
    fn c1_equal_one_fails() {
        let sup = GainSuprema {
            stiffness: -5.0,
            damping: -5.0,
        };
        let v = stability_conditions(1.0, 0.5, 2.0, 0.1, sup).unwrap();
        assert!(!v.c2_upper.holds);
        assert!(!v.certified);
        assert!(stability_conditions(2.0, 0.5, 0.0, 0.1, sup).is_err());
    }

    #[test]
    fn search_finds_certified_pair() {
        let sup = GainSuprema {
            stiffness: 2.4e6,
            damping: 3300.0,
        };
        let (c1, c2) = find_certified_constants(600.0, 10.0, sup).unwrap().unwrap();
        assert!(
            stability_conditions(c1, c2, 600.0, 10.0, sup)
                .unwrap()
                .certified
        );
        assert!(growth_bound(c1, c2, 600.0, 10.0) < 0.0);
    }

    #[test]
    fn zero_solution() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        let sol = riccati_kappa(&vec![0.0; 100], &vec![3.0; 100], 0.0, &grid).unwrap();
        assert!(sol.kappa.iter().all(|&k| k == 0.0));
        assert_eq!(sol.kappa.len(), 100);
    }

    #[test]
    fn stationary_root() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        // kappa^2 - H kappa + G = 0 with H = -5, G = -14: roots 2 and -7
        let (hh, gg) = (-5.0, -14.0);
        let root = (hh + (hh * hh - 4.0 * gg as f64).sqrt()) / 2.0;
        assert_relative_eq!(root, 2.0, epsilon = 1e-14);
        let sol = riccati_kappa(&vec![gg; 100], &vec![hh; 100], root, &grid).unwrap();
        for k in &sol.kappa {
            assert_relative_eq!(*k, 2.0, epsilon = 1e-10);
        }
        assert_relative_eq!(sol.bound, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn plug_back_residual() {
        let grid = AgeGrid::with_step(1.0, 1e-4).unwrap();
        let g: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|a| -3.0 - (2.0 * a).sin())
            .collect();
        let h: Vec<f64> = grid.nodes().iter().map(|a| -1.0 + a * a).collect();
        let sol = riccati_kappa(&g, &h, 0.5, &grid).unwrap();
        let da = grid.step();
        let worst = (1..grid.len() - 1)
            .map(|j| {
                let k = sol.kappa[j];
                let d = (sol.kappa[j + 1] - sol.kappa[j - 1]) / (2.0 * da);
                (d + k * k - h[j] * k + g[j]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn blow_up_triggers_retry() {
        let grid = AgeGrid::with_step(1.0, 0.01).unwrap();
        // G = 100, H = 0: kappa' = -kappa^2 - 100 blows down in finite age from any start
        let err = riccati_with_retry(&vec![100.0; 100], &vec![0.0; 100], &grid).unwrap_err();
        assert!(matches!(err, Error::RiccatiBlowUp { .. }));
        // kappa' = -kappa^2 + 1 blows up from kappa0 < -1 only; zero start succeeds
        let sol = riccati_with_retry(&vec![-1.0; 100], &vec![0.0; 100], &grid).unwrap();
        assert_eq!(sol.initial, 0.0);
        assert!(sol.failed_initials.is_empty());
    }
}
