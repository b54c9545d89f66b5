mod common;

use gated_pricing::baselines::{
    bs_price, charfn, dft, frft, FourierPricer, LevyDynamics, LevyModelParams, PricerConfig,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

const KOU: LevyDynamics = LevyDynamics::Kou {
    sigma: 0.1,
    lambda: 1.0,
    p_up: 0.4,
    eta1: 10.0,
    eta2: 5.0,
};
const VG: LevyDynamics = LevyDynamics::Vg {
    sigma: 0.15,
    nu: 0.2,
    theta: -0.14,
};

fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Price error relative to the price, floored at a millionth of spot so
/// that deep out-of-the-money quotes are judged on an absolute scale.
fn scaled_err(c: f64, reference: f64, spot: f64) -> f64 {
    (c - reference).abs() / reference.max(1e-6 * spot)
}

#[test]
fn frft_matches_direct_sum_small_sizes() {
    for n in [1usize, 2, 4, 8, 16, 32, 64] {
        let x = random_vec(n, n as u64);
        for gamma in [0.013, 0.25, 1.7, -0.4] {
            let fast = frft(&x, gamma).unwrap();
            let slow = common::direct_frft(&x, gamma);
            assert!(max_diff(&fast, &slow) < 1e-10, "n={n} gamma={gamma}");
        }
    }
}

#[test]
fn frft_with_inverse_size_is_dft() {
    for n in [8usize, 64, 1024] {
        let x = random_vec(n, 7);
        let a = frft(&x, 1.0 / n as f64).unwrap();
        let b = dft(&x);
        assert!(max_diff(&a, &b) < 1e-10 * n as f64, "n={n}");
    }
}

#[test]
fn frft_is_linear() {
    let x = random_vec(32, 1);
    let y = random_vec(32, 2);
    let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
    let combo: Vec<_> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
    let lhs = frft(&combo, 0.013).unwrap();
    let fx = frft(&x, 0.013).unwrap();
    let fy = frft(&y, 0.013).unwrap();
    let rhs: Vec<_> = fx.iter().zip(&fy).map(|(u, v)| a * u + b * v).collect();
    assert!(max_diff(&lhs, &rhs) < 1e-10);
}

#[test]
fn bs_closed_form_matches_lognormal_quadrature() {
    let q = common::bs_call_by_quadrature(0.2, 100.0, 100.0, 0.0, 1.0);
    let c = bs_price(0.2, 100.0, 100.0, 0.0, 0.0, 1.0);
    assert!((q - c).abs() < 1e-9, "{q} vs {c}");
    assert!((c - 7.9656).abs() < 5e-5);
}

#[test]
fn transform_bs_matches_closed_form() {
    let pricer = FourierPricer::default();
    let params = LevyModelParams::new(LevyDynamics::Bs { sigma: 0.2 }, 100.0, 0.02, 0.0);
    let strikes = gated_pricing::math::linspace(70.0, 130.0, 61);
    for days in [7.0, 30.0, 90.0] {
        let tau = days / 365.0;
        let got = pricer.price_strikes(&params, tau, &strikes).unwrap();
        for (k, c) in strikes.iter().zip(got) {
            let reference = bs_price(0.2, 100.0, *k, 0.02, 0.0, tau);
            assert!(
                scaled_err(c, reference, 100.0) < 1e-4,
                "tau={days}d K={k}: {c} vs {reference}"
            );
        }
    }
}

#[test]
fn charfn_matches_independent_kou_formula() {
    let params = LevyModelParams::new(KOU, 100.0, 0.03, 0.0);
    for u in [0.0, 0.7, -3.0, 25.0] {
        for shift in [0.0, -1.0, -2.5] {
            let z = Complex64::new(u, shift);
            let a = charfn(&params, z, 0.5);
            let b = common::kou_cf(z, 100.0, 0.03, 0.5, 0.1, 1.0, 0.4, 10.0, 5.0);
            assert!((a - b).norm() < 1e-10 * b.norm().max(1.0), "u={z}");
        }
    }
}

#[test]
fn transform_kou_matches_inversion_quadrature() {
    let pricer = FourierPricer::default();
    let (s, r) = (100.0, 0.02);
    let params = LevyModelParams::new(KOU, s, r, 0.0);
    for days in [7.0, 90.0] {
        let tau = days / 365.0;
        let strikes = [75.0, 90.0, 100.0, 110.0, 125.0];
        let got = pricer.price_strikes(&params, tau, &strikes).unwrap();
        let u_max = (80.0 / (0.01 * tau)).sqrt();
        for (k, c) in strikes.iter().zip(got) {
            let cf = |u: Complex64| common::kou_cf(u, s, r, tau, 0.1, 1.0, 0.4, 10.0, 5.0);
            let reference = common::call_by_inversion(cf, *k, r, tau, u_max);
            assert!(
                scaled_err(c, reference, s) < 1e-4,
                "tau={days}d K={k}: {c} vs {reference}"
            );
        }
    }
}

#[test]
fn transform_vg_matches_time_change_quadrature() {
    let pricer = FourierPricer::default();
    let (s, r) = (100.0, 0.02);
    let params = LevyModelParams::new(VG, s, r, 0.0);
    for days in [30.0, 90.0] {
        let tau = days / 365.0;
        let strikes = [80.0, 95.0, 100.0, 105.0, 120.0];
        let got = pricer.price_strikes(&params, tau, &strikes).unwrap();
        for (k, c) in strikes.iter().zip(got) {
            let reference = common::vg_call_by_time_change(s, *k, r, tau, 0.15, 0.2, -0.14);
            assert!(
                scaled_err(c, reference, s) < 1e-4,
                "tau={days}d K={k}: {c} vs {reference}"
            );
        }
    }
}

#[test]
fn transform_kou_agrees_with_monte_carlo() {
    let pricer = FourierPricer::default();
    let (s, r, tau) = (100.0, 0.02, 0.25);
    let params = LevyModelParams::new(KOU, s, r, 0.0);
    let strikes = [90.0, 100.0, 110.0];
    let got = pricer.price_strikes(&params, tau, &strikes).unwrap();
    let mc = common::kou_monte_carlo(s, &strikes, r, tau, (0.1, 1.0, 0.4, 10.0, 5.0), 200_000, 11);
    for ((k, c), (mean, se)) in strikes.iter().zip(got).zip(mc) {
        assert!((c - mean).abs() <= 3.0 * se, "K={k}: {c} vs {mean} ± {se}");
    }
}

#[test]
fn baseline_curves_are_monotone() {
    let pricer = FourierPricer::default();
    for dynamics in [LevyDynamics::Bs { sigma: 0.2 }, VG, KOU] {
        let params = LevyModelParams::new(dynamics, 100.0, 0.01, 0.0);
        let strikes = gated_pricing::math::linspace(60.0, 160.0, 101);
        let mut previous: Option<Vec<f64>> = None;
        for days in [7.0, 14.0, 30.0, 91.0, 182.0] {
            let c = pricer.price_strikes(&params, days / 365.0, &strikes).unwrap();
            for w in c.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{dynamics:?} not decreasing in K");
            }
            if let Some(prev) = &previous {
                for (a, b) in prev.iter().zip(&c) {
                    assert!(*b >= a - 1e-7, "{dynamics:?} not increasing in tau");
                }
            }
            previous = Some(c);
        }
    }
}

#[test]
fn far_strike_is_nearly_worthless() {
    let pricer = FourierPricer::default();
    for dynamics in [LevyDynamics::Bs { sigma: 0.2 }, VG, KOU] {
        let params = LevyModelParams::new(dynamics, 100.0, 0.01, 0.0);
        let c = pricer.price_strikes(&params, 0.5, &[1000.0]).unwrap()[0];
        assert!(c < 1e-4 * 100.0, "{dynamics:?}: {c}");
    }
}

#[test]
fn zero_strike_is_spot() {
    let pricer = FourierPricer::new(PricerConfig::default());
    let params = LevyModelParams::new(KOU, 100.0, 0.01, 0.0);
    let c = pricer.price_strikes(&params, 0.5, &[0.0, 100.0]).unwrap();
    assert_eq!(c[0], 100.0);
}
