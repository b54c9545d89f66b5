//! Grid checks of the six no-arbitrage conditions on a pricing surface, and
//! risk-neutral density extraction.
//!
//! | | condition |
//! |---|---|
//! | C1 | `dy/dm <= 0` |
//! | C2 | `d2y/dm2 >= 0` |
//! | C3 | `dy/dtau >= 0` |
//! | C4 | `y(m, tau) -> 0` as `m -> infinity` |
//! | C5 | `y(m, 0) = max(0, 1 - m)` |
//! | C6 | `max(0, 1 - m) <= e^{-r tau} y <= 1` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{linspace, trapezoid};
use crate::surface::PricingSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionStatus {
    Pass,
    SoftPass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub status: ConditionStatus,
    /// Largest violation found (zero when none).
    pub worst_violation: f64,
    pub worst_m: f64,
    pub worst_tau: f64,
    pub tolerance: f64,
}

/// Grid and tolerances for [`check_conditions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckGrid {
    pub m_min: f64,
    pub m_max: f64,
    pub n_m: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    /// Far strike used for C4.
    pub m_large: f64,
    /// Tolerance for C1-C4, which a rational architecture meets exactly.
    pub tol_hard: f64,
    /// Tolerance under which the trained conditions C5/C6 count as soft passes.
    pub tol_soft: f64,
    /// Rate used to discount in the C6 bounds.
    pub rate: f64,
}

impl Default for CheckGrid {
    fn default() -> Self {
        Self {
            m_min: 0.01,
            m_max: 4.0,
            n_m: 400,
            tau_min: 2.0 / 365.0,
            tau_max: 1.0,
            n_tau: 30,
            m_large: 50.0,
            tol_hard: 1e-6,
            tol_soft: 0.05,
            rate: 0.0,
        }
    }
}

impl CheckGrid {
    pub fn moneyness(&self) -> Vec<f64> {
        linspace(self.m_min, self.m_max, self.n_m)
    }

    pub fn maturities(&self) -> Vec<f64> {
        linspace(self.tau_min, self.tau_max, self.n_tau)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalityReport {
    pub conditions: Vec<ConditionResult>,
    pub grid: CheckGrid,
}

impl RationalityReport {
    pub fn get(&self, condition: &str) -> &ConditionResult {
        self.conditions
            .iter()
            .find(|c| c.condition == condition)
            .expect("every condition is reported")
    }

    pub fn all_hard_pass(&self) -> bool {
        ["C1", "C2", "C3", "C4"]
            .iter()
            .all(|c| self.get(c).status == ConditionStatus::Pass)
    }
}

struct Worst {
    value: f64,
    m: f64,
    tau: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: 0.0,
            m: f64::NAN,
            tau: f64::NAN,
        }
    }

    fn offer(&mut self, v: f64, m: f64, tau: f64) {
        // NaN counts as the worst possible violation
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v > self.value || self.m.is_nan() {
            if v > self.value {
                self.value = v;
            }
            self.m = m;
            self.tau = tau;
        }
    }

    fn result(self, name: &str, tol: f64, soft: Option<f64>) -> ConditionResult {
        let status = if self.value <= tol {
            ConditionStatus::Pass
        } else if soft.is_some_and(|s| self.value <= s) {
            ConditionStatus::SoftPass
        } else {
            ConditionStatus::Fail
        };
        ConditionResult {
            condition: name.to_string(),
            status,
            worst_violation: self.value,
            worst_m: self.m,
            worst_tau: self.tau,
            tolerance: tol,
        }
    }
}

/// Checks C1-C6 on the grid. Violations are reported, never raised.
pub fn check_conditions<S: PricingSurface + ?Sized>(model: &S, grid: &CheckGrid) -> RationalityReport {
    let ms = grid.moneyness();
    let taus = grid.maturities();
    let (mut c1, mut c2, mut c3, mut c4, mut c5, mut c6) = (
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
    );

    for &tau in &taus {
        for &m in &ms {
            c1.offer(model.dm(m, tau), m, tau);
            c2.offer(-model.d2m(m, tau), m, tau);
            c3.offer(-model.dtau(m, tau), m, tau);
        }
        c4.offer(model.value(grid.m_large, tau), grid.m_large, tau);
        for &m in std::iter::once(&0.0).chain(&ms) {
            let v = (-grid.rate * tau).exp() * model.value(m, tau);
            let lower = (1.0 - m).max(0.0);
            c6.offer((lower - v).max(v - 1.0), m, tau);
        }
    }
    for &m in std::iter::once(&0.0).chain(&ms) {
        c5.offer((model.value(m, 0.0) - (1.0 - m).max(0.0)).abs(), m, 0.0);
    }

    RationalityReport {
        conditions: vec![
            c1.result("C1", grid.tol_hard, None),
            c2.result("C2", grid.tol_hard, None),
            c3.result("C3", grid.tol_hard, None),
            c4.result("C4", grid.tol_hard, None),
            c5.result("C5", grid.tol_hard, Some(grid.tol_soft)),
            c6.result("C6", grid.tol_hard, Some(grid.tol_soft)),
        ],
        grid: grid.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptions {
    /// Moneyness step of the second difference when no analytic curvature exists.
    pub h: f64,
    /// Allowed `|integral - 1|`.
    pub integral_tol: f64,
    /// Allowed negativity of the density on the moneyness scale, `S_t f`.
    pub negativity_tol: f64,
    /// Relative change of the integral between steps `h` and `2h` above
    /// which the estimate is flagged unstable.
    pub refinement_tol: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            integral_tol: 0.05,
            negativity_tol: 1e-6,
            refinement_tol: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub spot: f64,
    pub tau: f64,
    pub rate: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub integral: f64,
    pub min_value: f64,
    pub valid: bool,
    /// The integral moved by more than the refinement tolerance when the
    /// difference step was doubled.
    pub unstable: bool,
}

fn second_difference<S: PricingSurface + ?Sized>(model: &S, m: f64, tau: f64, h: f64) -> f64 {
    let h = h.min(0.5 * m);
    (model.value(m + h, tau) - 2.0 * model.value(m, tau) + model.value(m - h, tau)) / (h * h)
}

/// `f(S_T) = d2c~/dK2 = (1/S_t) d2y/dm2` at `m = S_T / S_t`.
///
/// Analytic curvature is used when the model provides it; otherwise a
/// central second difference with step `opts.h`, cross-checked at `2h`.
pub fn extract_density<S: PricingSurface + ?Sized>(
    model: &S,
    spot: f64,
    tau: f64,
    rate: f64,
    grid: &[f64],
    opts: &DensityOptions,
) -> Result<DensityCurve> {
    if !(spot > 0.0) {
        return Err(Error::InvalidInput(format!("spot must be positive, got {spot}")));
    }
    if grid.len() < 2 || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "density grid must be positive and strictly ascending".into(),
        ));
    }
    let (density, unstable) = if model.has_analytic_d2m() {
        let f: Vec<f64> = grid.iter().map(|&x| model.d2m(x / spot, tau) / spot).collect();
        (f, false)
    } else {
        let f: Vec<f64> = grid
            .iter()
            .map(|&x| second_difference(model, x / spot, tau, opts.h) / spot)
            .collect();
        let coarse: Vec<f64> = grid
            .iter()
            .map(|&x| second_difference(model, x / spot, tau, 2.0 * opts.h) / spot)
            .collect();
        let (i1, i2) = (trapezoid(grid, &f), trapezoid(grid, &coarse));
        let unstable = (i1 - i2).abs() > opts.refinement_tol * i1.abs().max(1e-12);
        if unstable {
            log::warn!("density integral moves from {i2:.4} to {i1:.4} under step refinement; grid too coarse");
        }
        (f, unstable)
    };
    let integral = trapezoid(grid, &density);
    let min_value = density.iter().copied().fold(f64::INFINITY, f64::min);
    let valid = min_value * spot >= -opts.negativity_tol && (integral - 1.0).abs() <= opts.integral_tol && !unstable;
    Ok(DensityCurve {
        spot,
        tau,
        rate,
        grid: grid.to_vec(),
        density,
        integral,
        min_value,
        valid,
        unstable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Non-excess kurtosis.
    pub kurtosis: f64,
    /// False when computed from an invalid curve.
    pub trusted: bool,
}

/// Trapezoid-rule moments of the density, normalized by its integral.
pub fn density_moments(d: &DensityCurve) -> DensityMoments {
    let x = &d.grid;
    let moment = |g: &dyn Fn(f64) -> f64| {
        let y: Vec<f64> = x.iter().zip(&d.density).map(|(&s, &f)| g(s) * f).collect();
        trapezoid(x, &y) / d.integral
    };
    let mean = moment(&|s| s);
    let variance = moment(&|s| (s - mean).powi(2));
    let sd = variance.sqrt();
    let skewness = moment(&|s| ((s - mean) / sd).powi(3));
    let kurtosis = moment(&|s| ((s - mean) / sd).powi(4));
    if !d.valid {
        log::warn!("moments computed from an invalid density curve");
    }
    DensityMoments {
        mean,
        variance,
        skewness,
        kurtosis,
        trusted: d.valid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::FnSurface;

    #[test]
    fn payoff_surface() {
        let payoff = FnSurface(|m: f64, _tau: f64| (1.0 - m).max(0.0));
        let r = check_conditions(&payoff, &CheckGrid::default());
        assert_eq!(r.conditions.len(), 6);
        assert_eq!(r.get("C5").status, ConditionStatus::Pass);
        assert_eq!(r.get("C5").worst_violation, 0.0);
        assert_eq!(r.get("C1").status, ConditionStatus::Pass);
        // a convex kink gives a positive second difference
        assert_eq!(r.get("C2").status, ConditionStatus::Pass);
    }

    #[test]
    fn concave_surface_fails_c2_with_location() {
        let bad = FnSurface(|m: f64, tau: f64| (1.0 - m * m / 16.0).max(0.0) * (1.0 + tau));
        let r = check_conditions(&bad, &CheckGrid::default());
        let c2 = r.get("C2");
        assert_eq!(c2.status, ConditionStatus::Fail);
        assert!(c2.worst_m.is_finite() && c2.worst_tau > 0.9);
    }

    #[test]
    fn symmetric_density_has_no_skew() {
        let grid = linspace(1.0, 3.0, 2001);
        let density: Vec<f64> = grid.iter().map(|x| (-(x - 2.0f64).powi(2) / 0.02).exp()).collect();
        let integral = trapezoid(&grid, &density);
        let d = DensityCurve {
            spot: 2.0,
            tau: 1.0,
            rate: 0.0,
            density: density.iter().map(|f| f / integral).collect(),
            grid,
            integral: 1.0,
            min_value: 0.0,
            valid: true,
            unstable: false,
        };
        let mo = density_moments(&d);
        assert!(mo.skewness.abs() < 1e-9);
        assert!((mo.mean - 2.0).abs() < 1e-9);
        assert!((mo.kurtosis - 3.0).abs() < 1e-3);
    }

    #[test]
    fn density_grid_validation() {
        let s = FnSurface(|m: f64, _t: f64| (1.0 - m).max(0.0));
        assert!(extract_density(&s, 1.0, 0.1, 0.0, &[1.0, 0.5], &DensityOptions::default()).is_err());
        assert!(extract_density(&s, 1.0, 0.1, 0.0, &[0.0, 0.5], &DensityOptions::default()).is_err());
    }
}
