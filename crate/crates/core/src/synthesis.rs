//! Virtual contracts that pin the surface to its boundary values, hint
//! points for the convexity penalty, and fully synthetic option markets.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::{call_bounds, FourierPricer, LevyDynamics, LevyModelParams, PricerConfig};
use crate::error::{Error, Result};
use crate::market_data::{CallRecord, DAYS_PER_YEAR, MIN_TAU_DAYS};

pub const DEFAULT_C5_SAMPLES: usize = 50;
pub const DEFAULT_HINT_POINTS: usize = 100;
pub const DEFAULT_HINT_RANGE: (f64, f64) = (0.3, 3.0);
pub const DEFAULT_HINT_DELTA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VirtualKind {
    /// Expiring contract worth its payoff.
    #[serde(rename = "C5_boundary")]
    ExpiryBoundary,
    /// Zero-strike contract worth the underlying.
    #[serde(rename = "C6_upper")]
    ZeroStrike,
}

/// A synthesized contract with an analytically known price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualOption {
    pub kind: VirtualKind,
    pub tau_days: u32,
    pub spot: f64,
    pub strike: f64,
    pub rate: f64,
    /// Assigned (discounted) price.
    pub price: f64,
    /// Network target `e^{r tau} c / S_t`.
    pub target: f64,
}

impl VirtualOption {
    pub fn tau_years(&self) -> f64 {
        self.tau_days as f64 / DAYS_PER_YEAR
    }

    pub fn moneyness(&self) -> f64 {
        self.strike / self.spot
    }
}

fn unique_sorted(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Expiry contracts: for each distinct spot, `n_samples` strikes drawn
/// uniformly from `[0, S_t]`, each worth `S_t - K`.
pub fn make_c5_virtuals(spots: &[f64], n_samples: usize, seed: u64) -> Vec<VirtualOption> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in unique_sorted(spots) {
        for _ in 0..n_samples {
            let k = rng.random_range(0.0..=s);
            out.push(expiry_virtual(s, k));
        }
    }
    out
}

/// One expiring contract; also used for deterministic grids in tests.
pub fn expiry_virtual(spot: f64, strike: f64) -> VirtualOption {
    let price = (spot - strike).max(0.0);
    VirtualOption {
        kind: VirtualKind::ExpiryBoundary,
        tau_days: 0,
        spot,
        strike,
        rate: 0.0,
        price,
        target: price / spot,
    }
}

/// Zero-strike contracts, one per distinct `(tau_days, r)`, priced at the spot.
pub fn make_c6_virtuals(taus: &[(u32, f64)], spot: f64) -> Vec<VirtualOption> {
    let mut pairs = taus.to_vec();
    pairs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs.dedup();
    pairs
        .into_iter()
        .map(|(tau_days, rate)| {
            let tau = tau_days as f64 / DAYS_PER_YEAR;
            VirtualOption {
                kind: VirtualKind::ZeroStrike,
                tau_days,
                spot,
                strike: 0.0,
                rate,
                price: spot,
                target: (rate * tau).exp(),
            }
        })
        .collect()
}

/// An unpriced point where the slope of the surface is compared against its
/// value a step `delta` to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HintPoint {
    pub m: f64,
    pub tau_years: f64,
    pub delta: f64,
}

/// `points` evenly spaced moneyness values over `m_range` for every distinct maturity.
pub fn make_hint_grid(taus: &[f64], points: usize, m_range: (f64, f64), delta: f64) -> Result<Vec<HintPoint>> {
    let (lo, hi) = m_range;
    if points < 2 {
        return Err(Error::Config(format!(
            "hint grid needs at least 2 points per maturity, got {points}"
        )));
    }
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Config(format!("degenerate hint moneyness range [{lo}, {hi}]")));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("hint step must be positive, got {delta}")));
    }
    let ms = crate::math::linspace(lo, hi, points);
    Ok(unique_sorted(taus)
        .into_iter()
        .flat_map(|tau_years| ms.iter().map(move |&m| HintPoint { m, tau_years, delta }))
        .collect())
}

/// How the underlying evolves across the synthetic trading days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpotPath {
    /// Explicit closing levels, one per date.
    Given { levels: Vec<f64> },
    /// Driftless geometric Brownian motion on a 252-day year.
    Gbm { start: f64, vol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSurfaceSpec {
    pub generator: LevyDynamics,
    pub rate: f64,
    pub div_yield: f64,
    pub start_date: NaiveDate,
    pub n_dates: usize,
    pub spot_path: SpotPath,
    pub tau_days: Vec<u32>,
    pub strikes_per_tau: usize,
    pub m_range: (f64, f64),
    /// Strikes are rounded to this increment.
    pub strike_step: f64,
    /// Contracts cheaper than this fraction of spot are not listed.
    pub min_price_frac: f64,
}

impl Default for SyntheticSurfaceSpec {
    fn default() -> Self {
        Self {
            generator: LevyDynamics::Kou {
                sigma: 0.1,
                lambda: 1.0,
                p_up: 0.4,
                eta1: 10.0,
                eta2: 5.0,
            },
            rate: 0.02,
            div_yield: 0.0,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date"),
            n_dates: 20,
            spot_path: SpotPath::Gbm {
                start: 1000.0,
                vol: 0.15,
            },
            tau_days: vec![7, 14, 30, 60, 91, 182],
            strikes_per_tau: 40,
            m_range: (0.7, 1.3),
            strike_step: 5.0,
            min_price_frac: 1e-3,
        }
    }
}

impl SyntheticSurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_dates == 0 {
            return bad("synthetic market needs at least one date");
        }
        if self.tau_days.is_empty() || self.tau_days.iter().any(|&d| d < MIN_TAU_DAYS) {
            return bad("maturity grid must be nonempty with every maturity at least 2 days");
        }
        let (lo, hi) = self.m_range;
        if !(lo > 0.0 && hi > lo) || self.strikes_per_tau == 0 {
            return bad("strike range must be positive and nondegenerate");
        }
        if !(self.strike_step >= 0.0) || !(self.min_price_frac >= 0.0) {
            return bad("strike step and price floor must be non-negative");
        }
        match &self.spot_path {
            SpotPath::Given { levels } if levels.len() != self.n_dates || levels.iter().any(|s| !(*s > 0.0)) => {
                bad("given spot path must hold one positive level per date")
            }
            SpotPath::Gbm { start, vol } if !(*start > 0.0 && *vol >= 0.0) => {
                bad("GBM spot path needs start > 0, vol >= 0")
            }
            _ => Ok(()),
        }
    }

    fn spots(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.spot_path {
            SpotPath::Given { levels } => levels.clone(),
            SpotPath::Gbm { start, vol } => {
                let dt = 1.0 / 252.0;
                let mut s = *start;
                (0..self.n_dates)
                    .map(|d| {
                        if d > 0 {
                            let z: f64 = StandardNormal.sample(rng);
                            s *= (-0.5 * vol * vol * dt + vol * dt.sqrt() * z).exp();
                        }
                        s
                    })
                    .collect()
            }
        }
    }
}

/// Consecutive weekdays starting at (or after) `start`.
pub fn trading_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// A market of call records priced by the generating model on every date.
pub fn generate_synthetic_market(spec: &SyntheticSurfaceSpec, seed: u64) -> Result<Vec<CallRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spots = spec.spots(&mut rng);
    let pricer = FourierPricer::new(PricerConfig {
        adapt_alpha: true,
        ..PricerConfig::default()
    });
    let mut taus = spec.tau_days.clone();
    taus.sort_unstable();
    taus.dedup();

    let mut out = Vec::new();
    for (date, spot) in trading_days(spec.start_date, spec.n_dates).into_iter().zip(spots) {
        let params = LevyModelParams::new(spec.generator, spot, spec.rate, spec.div_yield);
        let mut strikes: Vec<f64> = crate::math::linspace(spec.m_range.0, spec.m_range.1, spec.strikes_per_tau)
            .into_iter()
            .map(|m| round_to(m * spot, spec.strike_step))
            .filter(|k| *k > 0.0)
            .collect();
        strikes.dedup();
        for &days in &taus {
            let tau = days as f64 / DAYS_PER_YEAR;
            let prices = match spec.generator {
                LevyDynamics::Bs { sigma } => strikes
                    .iter()
                    .map(|&k| crate::baselines::bs_price(sigma, spot, k, spec.rate, spec.div_yield, tau))
                    .collect(),
                _ => pricer.price_strikes(&params, tau, &strikes)?,
            };
            for (&k, c) in strikes.iter().zip(prices) {
                let (lo, _) = call_bounds(spot, k, spec.rate, spec.div_yield, tau);
                // transform noise at the 1e-9 level is tolerated and clipped
                if c < lo - 1e-6 * spot {
                    return Err(Error::Pricing(format!(
                        "generator price {c} below the no-arbitrage floor {lo} (K = {k}, tau = {days}d)"
                    )));
                }
                let c = c.max(lo);
                if c < spec.min_price_frac * spot {
                    continue;
                }
                out.push(CallRecord::new(date, days, k, spot, c, spec.rate));
            }
        }
    }
    Ok(out)
}

fn round_to(x: f64, step: f64) -> f64 {
    if step > 0.0 {
        (x / step).round() * step
    } else {
        x
    }
}
