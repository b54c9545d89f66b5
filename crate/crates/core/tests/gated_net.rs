mod common;

use gated_pricing::gated_net::{Checkpoint, Model, ModelSpec, ParamBlocks};
use gated_pricing::PricingSurface;
use rand::{Rng, SeedableRng};

/// Richardson-extrapolated central difference.
fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    let d1 = common::central_diff(&f, x, h);
    let d2 = common::central_diff(&f, x, 0.5 * h);
    (4.0 * d2 - d1) / 3.0
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn sample_points(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.random_range(0.05..2.5), rng.random_range(0.01..1.5)))
        .collect()
}

fn specs() -> Vec<ModelSpec> {
    vec![ModelSpec::single(5), ModelSpec::multi(3, 4, 3)]
}

#[test]
fn input_derivatives_match_finite_differences() {
    for spec in specs() {
        for (i, (m, tau)) in sample_points(50, 3).into_iter().enumerate() {
            let model = spec.init(i as u64);
            let dm = derivative(|x| model.forward(x, tau), m, 1e-4);
            let dtau = derivative(|t| model.forward(m, t), tau, 1e-4);
            let d2m = derivative(|x| model.dm(x, tau), m, 1e-4);
            assert!(
                rel_err(model.dm(m, tau), dm) < 1e-5,
                "{:?} dm at ({m}, {tau})",
                spec.kind
            );
            assert!(
                rel_err(model.dtau(m, tau), dtau) < 1e-5,
                "{:?} dtau at ({m}, {tau})",
                spec.kind
            );
            assert!(
                rel_err(model.d2m(m, tau), d2m) < 1e-5,
                "{:?} d2m at ({m}, {tau})",
                spec.kind
            );
        }
    }
}

fn check_param_grads<F, G>(model: &Model, m: f64, tau: f64, value: F, analytic: G, label: &str)
where
    F: Fn(&Model) -> f64,
    G: Fn(&Model, &mut Model),
{
    let mut grad = model.zeros_like();
    analytic(model, &mut grad);
    let g = grad.flatten();
    let theta = model.flatten();
    for idx in 0..theta.len() {
        let f = |x: f64| {
            let mut p = theta.clone();
            p[idx] = x;
            let mut probe = model.clone();
            probe.load_flat(&p);
            value(&probe)
        };
        let fd = derivative(f, theta[idx], 1e-4);
        assert!(
            rel_err(g[idx], fd) < 1e-5,
            "{label}: {} at ({m}, {tau}): analytic {} vs fd {fd}",
            model.block_of(idx),
            g[idx]
        );
    }
}

#[test]
fn parameter_gradients_of_output_match_finite_differences() {
    for spec in specs() {
        for (i, (m, tau)) in sample_points(20, 5).into_iter().enumerate() {
            let model = spec.init(100 + i as u64);
            check_param_grads(
                &model,
                m,
                tau,
                |p| p.forward(m, tau),
                |p, g| {
                    p.accumulate_grads(m, tau, 1.0, g);
                },
                "dy/dθ",
            );
        }
    }
}

#[test]
fn parameter_gradients_of_slope_match_finite_differences() {
    for spec in specs() {
        for (i, (m, tau)) in sample_points(20, 6).into_iter().enumerate() {
            let model = spec.init(200 + i as u64);
            check_param_grads(
                &model,
                m,
                tau,
                |p| p.dm(m, tau),
                |p, g| {
                    p.accumulate_dm_grads(m, tau, 1.0, g);
                },
                "d(dy/dm)/dθ",
            );
        }
    }
}

#[test]
fn gradients_scale_with_upstream_and_accumulate() {
    let model = ModelSpec::multi(2, 3, 2).init(9);
    let mut once = model.zeros_like();
    let y = model.accumulate_grads(0.9, 0.2, 2.5, &mut once);
    assert_eq!(y, model.forward(0.9, 0.2));
    let mut twice = model.zeros_like();
    model.accumulate_grads(0.9, 0.2, 1.25, &mut twice);
    model.accumulate_grads(0.9, 0.2, 1.25, &mut twice);
    for (a, b) in once.flatten().iter().zip(twice.flatten()) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn single_expert_mixture_equals_its_expert() {
    let model = ModelSpec::multi(4, 1, 3).init(12);
    let Model::Multi(p) = &model else { unreachable!() };
    let expert = Model::Single(p.experts[0].clone());
    for (m, tau) in sample_points(20, 8) {
        assert!((model.forward(m, tau) - expert.forward(m, tau)).abs() < 1e-14);
        assert!((p.gating_weights(m, tau)[0] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn gating_weights_form_a_simplex() {
    let model = ModelSpec::default().init(1);
    let Model::Multi(p) = &model else { unreachable!() };
    for (m, tau) in sample_points(30, 2) {
        let w = p.gating_weights(m, tau);
        assert_eq!(w.len(), 9);
        assert!(w.iter().all(|x| *x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parameter_counts() {
    // five blocks of J for the single model
    assert_eq!(ModelSpec::single(5).init(0).num_params(), 25);
    // I experts, 2 K_g + K_g gating hidden, K_g I + I gating output
    assert_eq!(ModelSpec::multi(5, 9, 5).init(0).num_params(), 9 * 25 + 15 + 45 + 9);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for spec in specs() {
        let model = spec.init(77);
        let ck = Checkpoint::new(model.clone(), 77, serde_json::json!({"epochs": 3}));
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ck);
        let bits: Vec<u64> = back.model.flatten().iter().map(|x| x.to_bits()).collect();
        let orig: Vec<u64> = model.flatten().iter().map(|x| x.to_bits()).collect();
        assert_eq!(bits, orig);
        assert_eq!(back.to_json().unwrap(), text);
    }
}

#[test]
fn checkpoint_fields_are_named() {
    let ck = Checkpoint::new(ModelSpec::default().init(1), 1, serde_json::Value::Null);
    let v: serde_json::Value = serde_json::from_str(&ck.to_json().unwrap()).unwrap();
    assert_eq!(v["model_type"], "multi");
    assert_eq!(v["J"], 5);
    assert_eq!(v["I"], 9);
    assert_eq!(v["K_g"], 5);
    assert!(v["parameters"]["experts"].is_array());
}

#[test]
fn malformed_checkpoint_is_rejected() {
    assert!(Checkpoint::from_json("{\"model_type\": \"single\"}").is_err());
    let ck = Checkpoint::new(ModelSpec::single(3).init(1), 1, serde_json::Value::Null);
    let text = ck.to_json().unwrap().replacen("\"J\": 3", "\"J\": 4", 1);
    assert!(Checkpoint::from_json(&text).is_err());
}

#[test]
fn seeded_init_is_reproducible() {
    let a = ModelSpec::default().init(42);
    let b = ModelSpec::default().init(42);
    let c = ModelSpec::default().init(43);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_parameter_unit_by_hand() {
    let p = gated_pricing::gated_net::SingleModelParams::zeros(1);
    // softplus(-1) * sigmoid(0) and -sigmoid(-1) * sigmoid(0)
    let y = (1.0 + (-1.0f64).exp()).ln() * 0.5;
    let dm = -0.5 / (1.0 + 1.0f64.exp());
    assert!((p.forward(1.0, 0.0) - y).abs() < 1e-15);
    assert!((y - 0.156631).abs() < 5e-7);
    assert!((p.forward_dm(1.0, 0.0) - dm).abs() < 1e-15);
    assert!((dm + 0.134471).abs() < 5e-7);
}

#[test]
fn output_weight_gradient_is_the_summand() {
    let Model::Single(p) = ModelSpec::single(4).init(17) else {
        unreachable!()
    };
    let g = p.param_grads(0.9, 0.3, 1.0);
    for j in 0..4 {
        assert!((g.w_hat[j] - p.summand(j, 0.9, 0.3)).abs() < 1e-15);
    }
    assert!(p.param_grads(0.9, 0.3, 0.0).w_hat.iter().all(|v| *v == 0.0));
}

#[test]
fn hidden_units_add() {
    let Model::Single(p) = ModelSpec::single(2).init(4) else {
        unreachable!()
    };
    let row = |j: usize| gated_pricing::gated_net::SingleModelParams {
        w_tilde: vec![p.w_tilde[j]],
        b_tilde: vec![p.b_tilde[j]],
        w_bar: vec![p.w_bar[j]],
        b_bar: vec![p.b_bar[j]],
        w_hat: vec![p.w_hat[j]],
    };
    for (m, tau) in sample_points(10, 8) {
        let sum = row(0).forward(m, tau) + row(1).forward(m, tau);
        assert!((p.forward(m, tau) - sum).abs() < 1e-15);
    }
}

#[test]
fn far_strikes_vanish() {
    for seed in 0..20 {
        assert!(ModelSpec::single(5).init(seed).forward(1e6, 0.5) < 1e-12);
        assert!(ModelSpec::multi(5, 9, 5).init(seed).forward(1e6, 0.5) < 1e-9);
    }
}

#[test]
fn gating_is_uniform_without_output_weights_and_shift_invariant() {
    let Model::Multi(mut p) = ModelSpec::multi(3, 4, 3).init(6) else {
        unreachable!()
    };
    let before = p.gating_weights(0.7, 0.2);
    p.b_ddot.iter_mut().for_each(|b| *b += 3.7);
    let after = p.gating_weights(0.7, 0.2);
    for (a, b) in before.iter().zip(&after) {
        assert!((a - b).abs() < 1e-12);
    }
    p.w_ddot.iter_mut().for_each(|w| *w = 0.0);
    p.b_ddot.iter_mut().for_each(|b| *b = 0.0);
    assert!(p.gating_weights(2.0, 0.9).iter().all(|w| (w - 0.25).abs() < 1e-15));
}

#[test]
fn identical_experts_give_the_shared_output() {
    let Model::Multi(mut p) = ModelSpec::multi(3, 5, 3).init(12) else {
        unreachable!()
    };
    let shared = p.experts[2].clone();
    p.experts.iter_mut().for_each(|e| *e = shared.clone());
    for (m, tau) in sample_points(10, 9) {
        assert!((p.forward(m, tau) - shared.forward(m, tau)).abs() < 1e-14 * shared.forward(m, tau).max(1e-300));
    }
}
