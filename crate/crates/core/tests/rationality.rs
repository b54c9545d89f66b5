mod common;

use gated_pricing::gated_net::ModelSpec;
use gated_pricing::math::{cumulative_trapezoid, linspace};
use gated_pricing::rationality::*;
use gated_pricing::surface::FnSurface;
use gated_pricing::PricingSurface;
use proptest::prelude::*;

/// Normalized Black-Scholes surface `y = e^{r tau} c / S` at unit spot.
fn bs_surface(sigma: f64, rate: f64) -> FnSurface<impl Fn(f64, f64) -> f64> {
    FnSurface(move |m: f64, tau: f64| (rate * tau).exp() * common::bs_call(sigma, 1.0, m, rate, tau))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn single_model_is_rational_for_any_draw(seed in any::<u64>(), hidden in 1usize..8) {
        let model = ModelSpec::single(hidden).init(seed);
        let grid = CheckGrid { n_m: 120, n_tau: 12, ..CheckGrid::default() };
        let report = check_conditions(&model, &grid);
        for c in ["C1", "C2", "C3", "C4"] {
            let r = report.get(c);
            prop_assert_eq!(r.status, ConditionStatus::Pass, "{} violated by {} at ({}, {})", c, r.worst_violation, r.worst_m, r.worst_tau);
        }
    }
}

#[test]
fn report_locates_a_mixture_convexity_breach() {
    let grid = CheckGrid::default();
    let (model, report) = (0..100)
        .map(|s| {
            let m = ModelSpec::multi(5, 9, 5).init(s);
            let r = check_conditions(&m, &grid);
            (m, r)
        })
        .find(|(_, r)| r.get("C2").status == ConditionStatus::Fail)
        .expect("an untrained mixture with a concave region");
    let c2 = report.get("C2");
    assert!(c2.worst_violation > grid.tol_hard);
    assert!((model.d2m(c2.worst_m, c2.worst_tau) + c2.worst_violation).abs() < 1e-12);
    assert_eq!(report.conditions.len(), 6);
}

#[test]
fn black_scholes_density_is_lognormal() {
    let (s, sigma, r, tau) = (100.0, 0.2, 0.03, 0.5);
    let grid = linspace(20.0, 260.0, 1201);
    let d = extract_density(&bs_surface(sigma, r), s, tau, r, &grid, &DensityOptions::default()).unwrap();
    assert!(d.valid, "integral {} min {}", d.integral, d.min_value);
    for (x, f) in grid.iter().zip(&d.density) {
        let oracle = common::lognormal_pdf(*x, sigma, s, r, tau);
        // compared on the moneyness scale, where the density is O(1)
        assert!(
            (s * f - s * oracle).abs() < 5e-4,
            "S_T = {x}: {} vs {}",
            s * f,
            s * oracle
        );
    }
}

#[test]
fn analytic_and_differenced_curvature_agree() {
    let model = ModelSpec::single(5).init(13);
    let wrapped = FnSurface(|m: f64, tau: f64| model.forward(m, tau));
    assert!(model.has_analytic_d2m() && !wrapped.has_analytic_d2m());
    let grid = linspace(5.0, 400.0, 800);
    let opts = DensityOptions::default();
    for tau in [0.02, 0.25, 1.0] {
        let exact = extract_density(&model, 100.0, tau, 0.0, &grid, &opts).unwrap();
        let fd = extract_density(&wrapped, 100.0, tau, 0.0, &grid, &opts).unwrap();
        for (a, b) in exact.density.iter().zip(&fd.density) {
            assert!((100.0 * (a - b)).abs() < 1e-4);
        }
    }
}

#[test]
fn cumulative_density_matches_the_strike_slope() {
    let surface = bs_surface(0.25, 0.0);
    let (s, tau) = (100.0, 0.75);
    let grid = linspace(0.5, 400.0, 4000);
    let d = extract_density(&surface, s, tau, 0.0, &grid, &DensityOptions::default()).unwrap();
    let cdf = cumulative_trapezoid(&grid, &d.density);
    for i in (0..grid.len()).step_by(97) {
        let slope = surface.dm(grid[i] / s, tau);
        assert!((cdf[i] - 1.0 - slope).abs() < 1e-3, "K = {}", grid[i]);
    }

    // without a unit-mass guarantee the identity holds as a difference of slopes
    let model = ModelSpec::single(4).init(3);
    let d = extract_density(&model, s, tau, 0.0, &grid, &DensityOptions::default()).unwrap();
    let cdf = cumulative_trapezoid(&grid, &d.density);
    let base = model.dm(grid[0] / s, tau);
    for i in (0..grid.len()).step_by(97) {
        assert!((cdf[i] - (model.dm(grid[i] / s, tau) - base)).abs() < 1e-3);
    }
}

#[test]
fn lognormal_moments() {
    let (s, sigma, tau) = (100.0, 0.2, 1.0);
    let grid = linspace(5.0, 500.0, 4000);
    let d = extract_density(&bs_surface(sigma, 0.0), s, tau, 0.0, &grid, &DensityOptions::default()).unwrap();
    let mom = density_moments(&d);
    assert!(mom.trusted);
    assert!((mom.mean - 100.0).abs() < 0.5, "mean {}", mom.mean);
    let var = s * s * ((sigma * sigma * tau).exp() - 1.0);
    assert!(
        (mom.variance / var - 1.0).abs() < 0.02,
        "variance {} vs {var}",
        mom.variance
    );
    let w = (sigma * sigma * tau).exp();
    let skew = (w + 2.0) * (w - 1.0).sqrt();
    assert!(
        (mom.skewness - skew).abs() < 0.02,
        "skewness {} vs {skew}",
        mom.skewness
    );
}

#[test]
fn narrow_density_has_small_variance() {
    let grid = linspace(95.0, 105.0, 4001);
    let d = extract_density(
        &bs_surface(0.005, 0.0),
        100.0,
        0.1,
        0.0,
        &grid,
        &DensityOptions {
            h: 1e-5,
            ..DensityOptions::default()
        },
    )
    .unwrap();
    let mom = density_moments(&d);
    assert!((mom.mean - 100.0).abs() < 1e-3);
    assert!(mom.variance < 0.03, "variance {}", mom.variance);
}

#[test]
fn concave_region_invalidates_the_density() {
    let bent = FnSurface(|m: f64, _tau: f64| (-m).exp() - 0.05 * m * m);
    let grid = linspace(1.0, 400.0, 400);
    let d = extract_density(&bent, 100.0, 0.1, 0.0, &grid, &DensityOptions::default()).unwrap();
    assert!(d.min_value < 0.0);
    assert!(!d.valid);
    assert!(!density_moments(&d).trusted);
}

#[test]
fn rejects_bad_grids() {
    let model = ModelSpec::single(2).init(0);
    let opts = DensityOptions::default();
    assert!(extract_density(&model, 100.0, 0.1, 0.0, &[10.0, 5.0], &opts).is_err());
    assert!(extract_density(&model, 100.0, 0.1, 0.0, &[0.0, 5.0], &opts).is_err());
    assert!(extract_density(&model, 0.0, 0.1, 0.0, &[1.0, 5.0], &opts).is_err());
}
