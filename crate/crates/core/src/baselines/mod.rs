//! Econometric baselines: Black-Scholes in closed form, and Black-Scholes,
//! Variance Gamma and Kou double-exponential jump diffusion priced from their
//! characteristic functions with a damped-call transform evaluated by the
//! fractional FFT.

mod calibrate;
mod frft;
mod transform;

pub use calibrate::{calibrate, price_records, CalibrationObjective, CalibrationOptions, CalibrationResult};
pub use frft::{dft, frft, FrftPlan};
pub use transform::{FourierPricer, LevySurface, PricerConfig};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::norm_cdf;

/// Risk-neutral dynamics of the log price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum LevyDynamics {
    Bs {
        sigma: f64,
    },
    Vg {
        sigma: f64,
        nu: f64,
        theta: f64,
    },
    Kou {
        sigma: f64,
        lambda: f64,
        p_up: f64,
        eta1: f64,
        eta2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    Bs,
    Vg,
    Kou,
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bs" => Ok(ModelVariant::Bs),
            "vg" => Ok(ModelVariant::Vg),
            "kou" => Ok(ModelVariant::Kou),
            other => Err(Error::InvalidInput(format!("unknown baseline model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::Bs => "bs",
            ModelVariant::Vg => "vg",
            ModelVariant::Kou => "kou",
        })
    }
}

impl LevyDynamics {
    pub fn variant(&self) -> ModelVariant {
        match self {
            LevyDynamics::Bs { .. } => ModelVariant::Bs,
            LevyDynamics::Vg { .. } => ModelVariant::Vg,
            LevyDynamics::Kou { .. } => ModelVariant::Kou,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            LevyDynamics::Bs { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            LevyDynamics::Vg { sigma, nu, theta } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
                if !(nu > 0.0 && nu.is_finite()) {
                    return bad(format!("nu must be positive, got {nu}"));
                }
                if !theta.is_finite() {
                    return bad("theta must be finite".into());
                }
                if 1.0 - theta * nu - 0.5 * sigma * sigma * nu <= 0.0 {
                    return bad("VG parameters admit no finite forward (1 - theta nu - sigma^2 nu / 2 <= 0)".into());
                }
            }
            LevyDynamics::Kou {
                sigma,
                lambda,
                p_up,
                eta1,
                eta2,
            } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return bad(format!("lambda must be non-negative, got {lambda}"));
                }
                if !(0.0..=1.0).contains(&p_up) {
                    return bad(format!("p_up must lie in [0, 1], got {p_up}"));
                }
                if !(eta1 > 1.0 && eta1.is_finite()) {
                    return bad(format!("eta1 must exceed 1, got {eta1}"));
                }
                if !(eta2 > 0.0 && eta2.is_finite()) {
                    return bad(format!("eta2 must be positive, got {eta2}"));
                }
            }
        }
        Ok(())
    }

    /// Lévy exponent per unit time, `ln E[e^{iuX_1}]`, for the driftless part.
    fn exponent(&self, u: Complex64) -> Complex64 {
        let i = Complex64::i();
        match *self {
            LevyDynamics::Bs { sigma } => -0.5 * sigma * sigma * u * u,
            LevyDynamics::Vg { sigma, nu, theta } => {
                // principal branch; Re(z) > 0 for real u and for the damped
                // shifts accepted by `max_damping`
                let z = 1.0 - i * u * theta * nu + 0.5 * sigma * sigma * nu * u * u;
                -z.ln() / nu
            }
            LevyDynamics::Kou {
                sigma,
                lambda,
                p_up,
                eta1,
                eta2,
            } => {
                let jumps = p_up * eta1 / (eta1 - i * u) + (1.0 - p_up) * eta2 / (eta2 + i * u) - 1.0;
                -0.5 * sigma * sigma * u * u + lambda * jumps
            }
        }
    }

    /// Drift adjustment making the discounted price a martingale.
    fn martingale_drift(&self) -> f64 {
        match *self {
            LevyDynamics::Bs { sigma } => -0.5 * sigma * sigma,
            LevyDynamics::Vg { sigma, nu, theta } => (1.0 - theta * nu - 0.5 * sigma * sigma * nu).ln() / nu,
            LevyDynamics::Kou {
                sigma,
                lambda,
                p_up,
                eta1,
                eta2,
            } => {
                let zeta = p_up * eta1 / (eta1 - 1.0) + (1.0 - p_up) * eta2 / (eta2 + 1.0) - 1.0;
                -0.5 * sigma * sigma - lambda * zeta
            }
        }
    }

    /// Annualized variance of the log return.
    pub fn annual_variance(&self) -> f64 {
        match *self {
            LevyDynamics::Bs { sigma } => sigma * sigma,
            LevyDynamics::Vg { sigma, nu, theta } => sigma * sigma + nu * theta * theta,
            LevyDynamics::Kou {
                sigma,
                lambda,
                p_up,
                eta1,
                eta2,
            } => sigma * sigma + lambda * (2.0 * p_up / (eta1 * eta1) + 2.0 * (1.0 - p_up) / (eta2 * eta2)),
        }
    }

    /// Largest damping `alpha` for which `E[S_T^{alpha+1}]` is finite, if bounded.
    pub fn max_damping(&self) -> Option<f64> {
        match *self {
            LevyDynamics::Bs { .. } => None,
            LevyDynamics::Kou { eta1, lambda, .. } => (lambda > 0.0).then_some(eta1 - 1.0),
            LevyDynamics::Vg { sigma, nu, theta } => {
                // 1 - a theta nu - sigma^2 nu a^2 / 2 = 0, positive root in a = alpha + 1
                let (qa, qb, qc) = (0.5 * sigma * sigma * nu, theta * nu, -1.0);
                let a = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
                Some(a - 1.0)
            }
        }
    }
}

/// A baseline model together with the market state it prices against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModelParams {
    #[serde(flatten)]
    pub dynamics: LevyDynamics,
    pub spot: f64,
    pub rate: f64,
    pub div_yield: f64,
}

impl LevyModelParams {
    pub fn new(dynamics: LevyDynamics, spot: f64, rate: f64, div_yield: f64) -> Self {
        Self {
            dynamics,
            spot,
            rate,
            div_yield,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dynamics.validate()?;
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spot must be positive, got {}",
                self.spot
            )));
        }
        if !self.rate.is_finite() || !self.div_yield.is_finite() {
            return Err(Error::InvalidParameter("rate and dividend yield must be finite".into()));
        }
        Ok(())
    }

    pub fn forward(&self, tau: f64) -> f64 {
        self.spot * ((self.rate - self.div_yield) * tau).exp()
    }

    pub fn with_spot(&self, spot: f64) -> Self {
        Self { spot, ..*self }
    }
}

/// Characteristic function of `ln S_T` under the risk-neutral measure,
/// `E[e^{iu ln S_T}]`, so that `charfn(-i) = S_t e^{(r - q) tau}`.
pub fn charfn(params: &LevyModelParams, u: Complex64, tau: f64) -> Complex64 {
    let i = Complex64::i();
    let drift = params.spot.ln() + (params.rate - params.div_yield + params.dynamics.martingale_drift()) * tau;
    (i * u * drift + tau * params.dynamics.exponent(u)).exp()
}

/// Black-Scholes European call. At `tau = 0` returns the intrinsic value.
pub fn bs_price(sigma: f64, spot: f64, strike: f64, rate: f64, div_yield: f64, tau: f64) -> f64 {
    let disc_spot = spot * (-div_yield * tau).exp();
    if tau <= 0.0 {
        return (spot - strike).max(0.0);
    }
    if strike <= 0.0 {
        return disc_spot;
    }
    let disc_strike = strike * (-rate * tau).exp();
    let vol = sigma * tau.sqrt();
    if vol <= 0.0 {
        return (disc_spot - disc_strike).max(0.0);
    }
    let d1 = ((spot / strike).ln() + (rate - div_yield + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    disc_spot * norm_cdf(d1) - disc_strike * norm_cdf(d2)
}

/// No-arbitrage lower and upper bounds for a European call.
pub fn call_bounds(spot: f64, strike: f64, rate: f64, div_yield: f64, tau: f64) -> (f64, f64) {
    let disc_spot = spot * (-div_yield * tau).exp();
    ((disc_spot - strike * (-rate * tau).exp()).max(0.0), disc_spot)
}
