//! Reference computations used only as test oracles. None of these share
//! code with the library paths they check.

#![allow(
    dead_code,
    clippy::excessive_precision,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

use num_complex::Complex64;

/// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth >= 50 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// `sum_n x_n exp(-2 pi i gamma j n)` by direct summation.
pub fn direct_frft(x: &[Complex64], gamma: f64) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * gamma * (j * k) as f64))
                .sum()
        })
        .collect()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn bs_call(sigma: f64, s: f64, k: f64, r: f64, tau: f64) -> f64 {
    let v = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / v;
    s * norm_cdf(d1) - k * (-r * tau).exp() * norm_cdf(d1 - v)
}

/// Lognormal density of `S_T` under Black-Scholes dynamics.
pub fn lognormal_pdf(x: f64, sigma: f64, s: f64, r: f64, tau: f64) -> f64 {
    let v = sigma * tau.sqrt();
    let mu = s.ln() + (r - 0.5 * sigma * sigma) * tau;
    let z = (x.ln() - mu) / v;
    (-0.5 * z * z).exp() / (x * v * (2.0 * std::f64::consts::PI).sqrt())
}

/// Black-Scholes call by integrating the payoff against the lognormal density.
pub fn bs_call_by_quadrature(sigma: f64, s: f64, k: f64, r: f64, tau: f64) -> f64 {
    let v = sigma * tau.sqrt();
    let mu = s.ln() + (r - 0.5 * sigma * sigma) * tau;
    // integrate over z = standard normal score of ln S_T
    let lo = ((k.ln() - mu) / v).max(-12.0);
    let payoff = |z: f64| {
        let st = (mu + v * z).exp();
        (st - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    (-r * tau).exp() * integrate(payoff, lo, 12.0, 1e-13)
}

/// Kou characteristic function of `ln S_T`, written out independently.
pub fn kou_cf(u: Complex64, s: f64, r: f64, tau: f64, sigma: f64, lambda: f64, p: f64, e1: f64, e2: f64) -> Complex64 {
    let i = Complex64::i();
    let kappa = p * e1 / (e1 - 1.0) + (1.0 - p) * e2 / (e2 + 1.0) - 1.0;
    let mu = r - 0.5 * sigma * sigma - lambda * kappa;
    let jump = p * e1 / (e1 - i * u) + (1.0 - p) * e2 / (e2 + i * u) - 1.0;
    (i * u * (s.ln() + mu * tau) - 0.5 * sigma * sigma * u * u * tau + lambda * tau * jump).exp()
}

/// Call price from a characteristic function via the single-integral
/// Gil-Pelaez form
/// `c = (F - K)/2 e^{-r tau} + e^{-r tau}/pi int_0^inf Re[e^{-iuk}(phi(u - i) - K phi(u)) / (iu)] du`.
pub fn call_by_inversion<CF: Fn(Complex64) -> Complex64>(cf: CF, k: f64, r: f64, tau: f64, u_max: f64) -> f64 {
    let i = Complex64::i();
    let fwd = cf(-i).re;
    let lk = k.ln();
    let integrand = |u: f64| {
        let u = u.max(1e-10);
        let uc = Complex64::new(u, 0.0);
        let z = (-i * uc * lk).exp() * (cf(uc - i) - k * cf(uc)) / (i * uc);
        z.re
    };
    let integral = integrate(integrand, 0.0, u_max, 1e-13 * fwd);
    (-r * tau).exp() * (0.5 * (fwd - k) + integral / std::f64::consts::PI)
}

/// Variance Gamma call by integrating the conditional Black-Scholes price
/// over the gamma time change. With `G = nu x`, `x ~ Gamma(a, 1)`, `a = tau/nu`,
/// the substitution `s = x^a` turns the density into `e^{-s^{1/a}} / Gamma(a + 1)`.
pub fn vg_call_by_time_change(s0: f64, k: f64, r: f64, tau: f64, sigma: f64, nu: f64, theta: f64) -> f64 {
    let a = tau / nu;
    let omega = (1.0 - theta * nu - 0.5 * sigma * sigma * nu).ln() / nu;
    let mu = s0.ln() + (r + omega) * tau;
    let gamma_a1 = libm::tgamma(a + 1.0);
    let conditional = |g: f64| {
        if g <= 0.0 {
            return ((mu).exp() - k).max(0.0);
        }
        let v = sigma * g.sqrt();
        let m = mu + theta * g;
        let d2 = (m - k.ln()) / v;
        (m + 0.5 * v * v).exp() * norm_cdf(d2 + v) - k * norm_cdf(d2)
    };
    let integrand = |s: f64| {
        let x = s.powf(1.0 / a);
        conditional(nu * x) * (-x).exp() / gamma_a1
    };
    let s_max = 60f64.powf(a);
    (-r * tau).exp() * integrate(integrand, 0.0, s_max, 1e-13 * s0)
}

/// Monte Carlo Kou call prices at several strikes; returns `(mean, standard error)` per strike.
pub fn kou_monte_carlo(
    s0: f64,
    strikes: &[f64],
    r: f64,
    tau: f64,
    (sigma, lambda, p, e1, e2): (f64, f64, f64, f64, f64),
    paths: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let kappa = p * e1 / (e1 - 1.0) + (1.0 - p) * e2 / (e2 + 1.0) - 1.0;
    let drift = (r - 0.5 * sigma * sigma - lambda * kappa) * tau;
    let poisson = Poisson::new(lambda * tau).unwrap();
    let up = Exp::new(e1).unwrap();
    let down = Exp::new(e2).unwrap();
    let mut sum = vec![0.0; strikes.len()];
    let mut sum_sq = vec![0.0; strikes.len()];
    for _ in 0..paths {
        let z: f64 = StandardNormal.sample(&mut rng);
        let n: f64 = poisson.sample(&mut rng);
        let mut jumps = 0.0;
        for _ in 0..n as u64 {
            jumps += if rng.random::<f64>() < p {
                up.sample(&mut rng)
            } else {
                -down.sample(&mut rng)
            };
        }
        let st = s0 * (drift + sigma * tau.sqrt() * z + jumps).exp();
        for (j, &k) in strikes.iter().enumerate() {
            let pay = (st - k).max(0.0);
            sum[j] += pay;
            sum_sq[j] += pay * pay;
        }
    }
    let disc = (-r * tau).exp();
    let n = paths as f64;
    sum.iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / n;
            let var = (q / n - mean * mean) * n / (n - 1.0);
            (disc * mean, disc * (var / n).sqrt())
        })
        .collect()
}

/// Monte Carlo VG call prices from the gamma time change; `(mean, standard error)` per strike.
pub fn vg_monte_carlo(
    s0: f64,
    strikes: &[f64],
    r: f64,
    tau: f64,
    (sigma, nu, theta): (f64, f64, f64),
    paths: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Gamma, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let omega = (1.0 - theta * nu - 0.5 * sigma * sigma * nu).ln() / nu;
    let clock = Gamma::new(tau / nu, nu).unwrap();
    let mut sum = vec![0.0; strikes.len()];
    let mut sum_sq = vec![0.0; strikes.len()];
    for _ in 0..paths {
        let g: f64 = clock.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let st = s0 * ((r + omega) * tau + theta * g + sigma * g.sqrt() * z).exp();
        for (j, &k) in strikes.iter().enumerate() {
            let pay = (st - k).max(0.0);
            sum[j] += pay;
            sum_sq[j] += pay * pay;
        }
    }
    let disc = (-r * tau).exp();
    let n = paths as f64;
    sum.iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / n;
            let var = (q / n - mean * mean) * n / (n - 1.0);
            (disc * mean, disc * (var / n).sqrt())
        })
        .collect()
}

/// Central-difference derivative.
pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}
