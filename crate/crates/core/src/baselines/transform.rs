use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::frft::{frft, FrftPlan};
use super::{bs_price, call_bounds, charfn, LevyDynamics, LevyModelParams};
use crate::error::{Error, Result};
use crate::surface::PricingSurface;

/// Settings for the damped-call transform pricer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricerConfig {
    /// Damping exponent applied to the call price before transforming.
    pub alpha: f64,
    /// Lower the damping automatically when the model's moments do not
    /// admit `alpha`; otherwise such a model is a configuration error.
    pub adapt_alpha: bool,
    /// Smallest and largest grid sizes; the size doubles from `n_min` until
    /// the truncated frequency tail is below `tail_tol * S_t`.
    pub n_min: usize,
    pub n_max: usize,
    pub tail_tol: f64,
    /// Half-width of the log-strike window in standard deviations of `ln S_T`.
    pub window_sd: f64,
}

impl Default for PricerConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            adapt_alpha: false,
            n_min: 4096,
            n_max: 1 << 22,
            tail_tol: 1e-9,
            window_sd: 4.0,
        }
    }
}

/// Discounted call prices on a uniform log-strike grid.
#[derive(Debug, Clone)]
pub struct LogStrikeGrid {
    pub k0: f64,
    pub dk: f64,
    pub prices: Vec<f64>,
    pub plan: FrftPlan,
}

impl LogStrikeGrid {
    pub fn strike(&self, idx: usize) -> f64 {
        (self.k0 + self.dk * idx as f64).exp()
    }

    /// Four-point Lagrange interpolation in log strike.
    pub fn interpolate(&self, strike: f64) -> f64 {
        let n = self.prices.len();
        let t = (strike.ln() - self.k0) / self.dk;
        let base = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let s = t - base as f64;
        let p = &self.prices[base..base + 4];
        // nodes at s = 0, 1, 2, 3
        let l0 = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0;
        let l1 = s * (s - 2.0) * (s - 3.0) / 2.0;
        let l2 = -s * (s - 1.0) * (s - 3.0) / 2.0;
        let l3 = s * (s - 1.0) * (s - 2.0) / 6.0;
        l0 * p[0] + l1 * p[1] + l2 * p[2] + l3 * p[3]
    }
}

/// Damped-call (Carr-Madan) pricer evaluated with the fractional FFT.
///
/// The integration spacing is set from the aliasing period required by the
/// damping, the log-strike spacing from the requested strike window, and the
/// grid size grows until the neglected frequency tail is negligible.
#[derive(Debug, Clone, Default)]
pub struct FourierPricer {
    pub config: PricerConfig,
}

impl FourierPricer {
    pub fn new(config: PricerConfig) -> Self {
        Self { config }
    }

    fn damping_for(&self, dynamics: &LevyDynamics) -> Result<f64> {
        let alpha = self.config.alpha;
        match dynamics.max_damping() {
            Some(limit) if alpha >= limit => {
                if self.config.adapt_alpha && limit > 0.0 {
                    Ok(0.5 * limit)
                } else {
                    Err(Error::Config(format!(
                        "damping alpha = {alpha} makes the transform non-integrable (model admits alpha < {limit:.4})"
                    )))
                }
            }
            _ => Ok(alpha),
        }
    }

    /// Transform of the damped call at frequency `u`.
    fn psi(params: &LevyModelParams, alpha: f64, tau: f64, u: f64) -> Complex64 {
        let i = Complex64::i();
        let uu = Complex64::new(u, 0.0);
        let num = (-params.rate * tau).exp() * charfn(params, uu - (alpha + 1.0) * i, tau);
        let den = alpha * alpha + alpha - u * u + i * (2.0 * alpha + 1.0) * u;
        num / den
    }

    /// Call prices on a log-strike grid covering `[k_lo, k_hi]` (natural-log
    /// strikes) and at least the configured number of standard deviations
    /// around the forward.
    pub fn price_grid(&self, params: &LevyModelParams, tau: f64, k_lo: f64, k_hi: f64) -> Result<LogStrikeGrid> {
        params.validate()?;
        if !(tau > 0.0) {
            return Err(Error::InvalidInput("transform pricing needs tau > 0".into()));
        }
        let alpha = self.damping_for(&params.dynamics)?;
        let ln_fwd = params.forward(tau).ln();
        let sd = (params.dynamics.annual_variance() * tau).sqrt();
        let half = (self.config.window_sd * sd).max(ln_fwd - k_lo).max(k_hi - ln_fwd) * 1.05;
        let k0 = ln_fwd - half;

        // aliasing period in log strike: the damped call decays like
        // e^{alpha (k - ln F)} to the left, relative to an at-the-money level ~ 0.4 sd
        let atm_rel = (0.4 * sd).clamp(1e-12, 1.0);
        let period = ((1e12f64).ln() - atm_rel.ln()) / alpha;
        let period = period.max(4.0 * half);
        let eta = 2.0 * PI / period;

        let mut n = self.config.n_min.next_power_of_two().max(16);
        loop {
            let u_max = n as f64 * eta;
            let tail = (-alpha * k0).exp() / PI * Self::psi(params, alpha, tau, u_max).norm() * u_max * 3.0;
            if tail <= self.config.tail_tol * params.spot || n >= self.config.n_max {
                if tail > self.config.tail_tol * params.spot {
                    log::warn!(
                        "transform grid capped at N = {n}; estimated truncation error {:.3e} x spot",
                        tail / params.spot
                    );
                }
                break;
            }
            n *= 2;
        }

        let lambda = 2.0 * half / n as f64;
        let plan = FrftPlan::new(n, alpha, eta, lambda)?;
        let x: Vec<Complex64> = (0..n)
            .map(|j| {
                let u = eta * j as f64;
                let w = if j == 0 { 0.5 } else { 1.0 };
                Complex64::from_polar(1.0, -u * k0) * Self::psi(params, alpha, tau, u) * eta * w
            })
            .collect();
        let y = frft(&x, plan.fractional_parameter())?;
        let prices = y
            .iter()
            .enumerate()
            .map(|(l, v)| {
                let k = k0 + lambda * l as f64;
                (-alpha * k).exp() / PI * v.re
            })
            .collect();
        Ok(LogStrikeGrid {
            k0,
            dk: lambda,
            prices,
            plan,
        })
    }

    /// Prices at arbitrary strikes with one transform per call.
    pub fn price_strikes(&self, params: &LevyModelParams, tau: f64, strikes: &[f64]) -> Result<Vec<f64>> {
        if strikes.is_empty() {
            return Ok(Vec::new());
        }
        if tau <= 0.0 {
            return Ok(strikes.iter().map(|k| (params.spot - k).max(0.0)).collect());
        }
        let positive: Vec<f64> = strikes.iter().copied().filter(|k| *k > 0.0).collect();
        let (k_lo, k_hi) = positive.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(k.ln()), hi.max(k.ln()))
        });
        let ln_fwd = params.forward(tau).ln();
        let (k_lo, k_hi) = if positive.is_empty() {
            (ln_fwd, ln_fwd)
        } else {
            (k_lo, k_hi)
        };
        let grid = self.price_grid(params, tau, k_lo, k_hi)?;
        let tol = 1e-4 * params.spot;
        strikes
            .iter()
            .map(|&k| {
                let (lo, hi) = call_bounds(params.spot, k, params.rate, params.div_yield, tau);
                if k <= 0.0 {
                    return Ok(hi);
                }
                let c = grid.interpolate(k);
                if c < lo - tol || c > hi + tol || !c.is_finite() {
                    return Err(Error::Pricing(format!(
                        "transform price {c} at K = {k} outside no-arbitrage bounds [{lo}, {hi}]"
                    )));
                }
                Ok(c)
            })
            .collect()
    }

    /// `(K, c)` pairs on `n` strikes evenly spaced over `[k_min, k_max]`.
    pub fn price_curve(
        &self,
        params: &LevyModelParams,
        tau: f64,
        k_min: f64,
        k_max: f64,
        n: usize,
    ) -> Result<Vec<(f64, f64)>> {
        if !(k_min > 0.0 && k_max > k_min) || n < 2 {
            return Err(Error::InvalidInput(
                "strike range must satisfy 0 < k_min < k_max and n >= 2".into(),
            ));
        }
        let strikes = crate::math::linspace(k_min, k_max, n);
        let prices = self.price_strikes(params, tau, &strikes)?;
        Ok(strikes.into_iter().zip(prices).collect())
    }

    /// Single price; closed form for Black-Scholes, transform otherwise.
    pub fn price(&self, params: &LevyModelParams, strike: f64, tau: f64) -> Result<f64> {
        match params.dynamics {
            LevyDynamics::Bs { sigma } => Ok(bs_price(sigma, params.spot, strike, params.rate, params.div_yield, tau)),
            _ => Ok(self.price_strikes(params, tau, &[strike])?[0]),
        }
    }
}

/// A baseline model viewed as a normalized surface `y(m, tau)` at unit spot.
#[derive(Debug, Clone)]
pub struct LevySurface {
    pub params: LevyModelParams,
    pub pricer: FourierPricer,
}

impl LevySurface {
    pub fn new(dynamics: LevyDynamics, rate: f64, div_yield: f64) -> Self {
        Self {
            params: LevyModelParams::new(dynamics, 1.0, rate, div_yield),
            pricer: FourierPricer::default(),
        }
    }
}

impl PricingSurface for LevySurface {
    fn value(&self, m: f64, tau: f64) -> f64 {
        let c = self.pricer.price(&self.params, m, tau).unwrap_or(f64::NAN);
        (self.params.rate * tau).exp() * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_cubic() {
        let k0 = 4.0;
        let dk = 0.01;
        let f = |k: f64| 1.0 + 2.0 * k - 0.5 * k * k + 0.1 * k * k * k;
        let grid = LogStrikeGrid {
            k0,
            dk,
            prices: (0..20).map(|i| f(k0 + dk * i as f64)).collect(),
            plan: FrftPlan::new(16, 1.5, 0.1, 0.01).unwrap(),
        };
        for t in [0.3, 5.5, 10.01, 18.7] {
            let k = k0 + dk * t;
            assert!((grid.interpolate(k.exp()) - f(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn kou_damping_must_be_admissible() {
        let p = LevyModelParams::new(
            LevyDynamics::Kou {
                sigma: 0.1,
                lambda: 1.0,
                p_up: 0.4,
                eta1: 2.0,
                eta2: 5.0,
            },
            100.0,
            0.0,
            0.0,
        );
        let strict = FourierPricer::default();
        assert!(matches!(strict.price_strikes(&p, 0.5, &[100.0]), Err(Error::Config(_))));
        let adaptive = FourierPricer::new(PricerConfig {
            adapt_alpha: true,
            ..Default::default()
        });
        assert!(adaptive.price_strikes(&p, 0.5, &[100.0]).is_ok());
    }
}
