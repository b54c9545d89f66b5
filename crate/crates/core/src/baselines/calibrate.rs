use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transform::{FourierPricer, PricerConfig};
use super::{bs_price, LevyDynamics, LevyModelParams, ModelVariant};
use crate::error::{Error, Result};
use crate::market_data::CallRecord;
use crate::math::{nelder_mead, sigmoid, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationObjective {
    /// Mean squared error in dollar prices.
    Mse,
    /// Mean absolute percentage error in dollar prices.
    Mape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub objective: CalibrationObjective,
    pub starts: usize,
    pub seed: u64,
    /// Simplex evaluation budget per start (the polishing restart gets the same).
    pub max_evals: usize,
    pub pricer: PricerConfig,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            objective: CalibrationObjective::Mse,
            starts: 10,
            seed: 0,
            max_evals: 1200,
            pricer: PricerConfig {
                adapt_alpha: true,
                n_min: 1024,
                n_max: 1 << 15,
                tail_tol: 1e-8,
                ..PricerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: LevyModelParams,
    pub mse: f64,
    pub mape: f64,
    pub evals: usize,
    pub converged: bool,
    pub n_contracts: usize,
}

/// Fits one baseline to a single day's contracts by multi-start simplex
/// search over transformed (unconstrained) parameters.
pub fn calibrate(
    records: &[CallRecord],
    variant: ModelVariant,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let n_params = match variant {
        ModelVariant::Bs => 1,
        ModelVariant::Vg => 3,
        ModelVariant::Kou => 5,
    };
    if records.len() < n_params {
        return Err(Error::InvalidInput(format!(
            "{} contracts cannot identify {n_params} {variant} parameters",
            records.len()
        )));
    }
    let first = &records[0];
    if records.iter().any(|r| r.date != first.date) {
        return Err(Error::InvalidInput(
            "calibration expects records from a single date".into(),
        ));
    }
    if records.iter().any(|r| (r.spot - first.spot).abs() > 1e-12 * first.spot) {
        return Err(Error::InvalidInput(
            "calibration expects a single underlying level".into(),
        ));
    }
    let day = DaySlices::new(records);
    let pricer = FourierPricer::new(opts.pricer.clone());
    let objective = |x: &[f64]| -> f64 {
        let dynamics = decode(variant, x);
        if dynamics.validate().is_err() {
            return f64::INFINITY;
        }
        day.errors(&dynamics, &pricer, opts.objective).unwrap_or(f64::INFINITY)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|_| random_start(variant, &mut rng))
        .collect();
    let simplex = SimplexOptions {
        initial_step: 0.3,
        max_evals: opts.max_evals,
        ..SimplexOptions::default()
    };
    let runs: Vec<_> = starts
        .par_iter()
        .map(|x0| {
            let first = nelder_mead(objective, x0, &simplex);
            let polish = nelder_mead(
                objective,
                &first.x,
                &SimplexOptions {
                    initial_step: 0.05,
                    ..simplex.clone()
                },
            );
            let evals = first.evals + polish.evals;
            let best = if polish.value <= first.value { polish } else { first };
            (best, evals)
        })
        .collect();
    let evals = runs.iter().map(|(_, e)| e).sum();
    let (best, _) = runs
        .into_iter()
        .min_by(|a, b| a.0.value.total_cmp(&b.0.value))
        .expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Pricing(format!("{variant} calibration failed from every start")));
    }
    if !best.converged {
        log::warn!("{variant} calibration did not meet tolerance; reporting best effort");
    }
    let dynamics = decode(variant, &best.x);
    let mse = day.errors(&dynamics, &pricer, CalibrationObjective::Mse)?;
    let mape = day.errors(&dynamics, &pricer, CalibrationObjective::Mape)?;
    Ok(CalibrationResult {
        params: LevyModelParams::new(dynamics, first.spot, first.rate, 0.0),
        mse,
        mape,
        evals,
        converged: best.converged,
        n_contracts: records.len(),
    })
}

/// Prices every record with a calibrated (or generating) model.
pub fn price_records(params: &LevyModelParams, records: &[CallRecord], pricer: &FourierPricer) -> Result<Vec<f64>> {
    let mut out = vec![0.0; records.len()];
    for (tau_days, idx) in group_by_tau(records) {
        let first = &records[idx[0]];
        let p = LevyModelParams {
            spot: first.spot,
            rate: first.rate,
            ..*params
        };
        let tau = tau_days as f64 / crate::market_data::DAYS_PER_YEAR;
        let strikes: Vec<f64> = idx.iter().map(|&i| records[i].strike).collect();
        let prices = match p.dynamics {
            LevyDynamics::Bs { sigma } => strikes
                .iter()
                .map(|&k| bs_price(sigma, p.spot, k, p.rate, p.div_yield, tau))
                .collect(),
            _ => pricer.price_strikes(&p, tau, &strikes)?,
        };
        for (&i, c) in idx.iter().zip(prices) {
            out[i] = c;
        }
    }
    Ok(out)
}

fn group_by_tau(records: &[CallRecord]) -> BTreeMap<u32, Vec<usize>> {
    let mut by_tau: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_tau.entry(r.tau_days).or_default().push(i);
    }
    by_tau
}

/// One day's contracts grouped by maturity.
struct DaySlices {
    spot: f64,
    slices: Vec<Slice>,
    count: usize,
}

struct Slice {
    tau: f64,
    rate: f64,
    strikes: Vec<f64>,
    prices: Vec<f64>,
}

impl DaySlices {
    fn new(records: &[CallRecord]) -> Self {
        let slices = group_by_tau(records)
            .into_iter()
            .map(|(days, idx)| {
                let tau = days as f64 / crate::market_data::DAYS_PER_YEAR;
                Slice {
                    tau,
                    rate: records[idx[0]].rate,
                    strikes: idx.iter().map(|&i| records[i].strike).collect(),
                    prices: idx.iter().map(|&i| records[i].price).collect(),
                }
            })
            .collect();
        Self {
            spot: records[0].spot,
            slices,
            count: records.len(),
        }
    }

    fn errors(&self, dynamics: &LevyDynamics, pricer: &FourierPricer, objective: CalibrationObjective) -> Result<f64> {
        let mut total = 0.0;
        let mut counted = 0usize;
        for slice in &self.slices {
            let params = LevyModelParams::new(*dynamics, self.spot, slice.rate, 0.0);
            let model = match *dynamics {
                LevyDynamics::Bs { sigma } => slice
                    .strikes
                    .iter()
                    .map(|&k| bs_price(sigma, self.spot, k, slice.rate, 0.0, slice.tau))
                    .collect(),
                _ => pricer.price_strikes(&params, slice.tau, &slice.strikes)?,
            };
            for (m, c) in model.iter().zip(&slice.prices) {
                match objective {
                    CalibrationObjective::Mse => {
                        total += (m - c).powi(2);
                        counted += 1;
                    }
                    CalibrationObjective::Mape if *c > 0.0 => {
                        total += ((m - c) / c).abs();
                        counted += 1;
                    }
                    CalibrationObjective::Mape => {}
                }
            }
        }
        debug_assert!(counted <= self.count);
        Ok(if counted == 0 { 0.0 } else { total / counted as f64 })
    }
}

/// Maps unconstrained coordinates to model parameters: log for positive
/// parameters, logistic for the up-jump probability, `1 + e^x` for `eta1`.
fn decode(variant: ModelVariant, x: &[f64]) -> LevyDynamics {
    match variant {
        ModelVariant::Bs => LevyDynamics::Bs { sigma: x[0].exp() },
        ModelVariant::Vg => LevyDynamics::Vg {
            sigma: x[0].exp(),
            nu: x[1].exp(),
            theta: x[2],
        },
        ModelVariant::Kou => LevyDynamics::Kou {
            sigma: x[0].exp(),
            lambda: x[1].exp(),
            p_up: sigmoid(x[2]),
            eta1: 1.0 + x[3].exp(),
            eta2: x[4].exp(),
        },
    }
}

fn random_start<R: Rng>(variant: ModelVariant, rng: &mut R) -> Vec<f64> {
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    match variant {
        ModelVariant::Bs => vec![u(0.05f64, 0.6).ln()],
        ModelVariant::Vg => vec![u(0.05f64, 0.5).ln(), u(0.05f64, 1.0).ln(), u(-0.4, 0.1)],
        ModelVariant::Kou => {
            let p: f64 = u(0.1, 0.9);
            vec![
                u(0.05f64, 0.4).ln(),
                u(0.1f64, 5.0).ln(),
                (p / (1.0 - p)).ln(),
                (u(3.0f64, 30.0) - 1.0).ln(),
                u(2.0f64, 20.0).ln(),
            ]
        }
    }
}
