//! Loss, the convexity hint penalty, Adam, the training loop and the
//! rolling train/test harness.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{calibrate, price_records, CalibrationOptions, FourierPricer, ModelVariant};
use crate::error::{Error, Result};
use crate::gated_net::{Checkpoint, Model, ModelKind, ModelSpec, ParamBlocks, MAX_LOG_WEIGHT};
use crate::market_data::{group_by_date, CallRecord};
use crate::surface::PricingSurface;
use crate::synthesis::{
    make_c5_virtuals, make_c6_virtuals, make_hint_grid, HintPoint, VirtualOption, DEFAULT_C5_SAMPLES,
    DEFAULT_HINT_DELTA, DEFAULT_HINT_POINTS, DEFAULT_HINT_RANGE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub mse_weight: f64,
    pub mape_weight: f64,
    pub hint_weight: f64,
    /// Per-row weight of virtual contracts relative to market records.
    pub virtual_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            mse_weight: 1.0,
            mape_weight: 1.0,
            hint_weight: 1.0,
            virtual_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.mse_weight, self.mape_weight, self.hint_weight, self.virtual_weight];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if self.mse_weight == 0.0 && self.mape_weight == 0.0 {
            return Err(Error::Config(
                "at least one of mse_weight, mape_weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the fitting problem on the network's scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPoint {
    pub m: f64,
    pub tau: f64,
    pub target: f64,
    pub is_virtual: bool,
}

impl From<&CallRecord> for TrainPoint {
    fn from(r: &CallRecord) -> Self {
        Self {
            m: r.moneyness,
            tau: r.tau_years,
            target: r.target,
            is_virtual: false,
        }
    }
}

impl From<&VirtualOption> for TrainPoint {
    fn from(v: &VirtualOption) -> Self {
        Self {
            m: v.moneyness(),
            tau: v.tau_years(),
            target: v.target,
            is_virtual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    /// `mse_weight * mse + mape_weight * mape`.
    pub total: f64,
    pub mse: f64,
    pub mape: f64,
    /// Rows left out of the percentage term because their target is zero.
    pub mape_skipped: usize,
    pub grad: Model,
}

/// Weighted MSE plus MAPE of `y` against `y*`, with parameter gradients.
///
/// Rows with `y* = 0` are excluded from the percentage term only.
pub fn loss(batch: &[TrainPoint], model: &Model, cfg: &LossConfig) -> Result<LossValue> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::InvalidInput("loss needs a nonempty batch".into()));
    }
    let weight = |p: &TrainPoint| if p.is_virtual { cfg.virtual_weight } else { 1.0 };
    let w_all: f64 = batch.iter().map(weight).sum();
    let w_pos: f64 = batch.iter().filter(|p| p.target > 0.0).map(weight).sum();
    let mape_skipped = batch.iter().filter(|p| p.target <= 0.0).count();
    if cfg.mape_weight > 0.0 && w_pos == 0.0 && cfg.mse_weight == 0.0 {
        return Err(Error::InvalidInput(
            "every target is zero, so a percentage-only loss is undefined".into(),
        ));
    }
    if w_all == 0.0 {
        return Err(Error::InvalidInput("every row in the batch has zero weight".into()));
    }

    let mut grad = model.zeros_like();
    let (mut mse, mut mape) = (0.0, 0.0);
    for p in batch {
        let w = weight(p);
        if w == 0.0 {
            continue;
        }
        let y = model.accumulate_grads_with(
            p.m,
            p.tau,
            |y| {
                let err = y - p.target;
                let mut upstream = cfg.mse_weight * 2.0 * err * w / w_all;
                if p.target > 0.0 && w_pos > 0.0 {
                    // f64::signum(0.0) is 1; a zero residual contributes no subgradient
                    let sign = if err == 0.0 { 0.0 } else { err.signum() };
                    upstream += cfg.mape_weight * sign * w / (p.target * w_pos);
                }
                upstream
            },
            &mut grad,
        );
        let err = y - p.target;
        mse += w * err * err / w_all;
        if p.target > 0.0 && w_pos > 0.0 {
            mape += w * err.abs() / p.target / w_pos;
        }
    }
    Ok(LossValue {
        total: cfg.mse_weight * mse + cfg.mape_weight * mape,
        mse,
        mape,
        mape_skipped,
        grad,
    })
}

/// `sum max(0, g(m, tau) - g(m + delta, tau))` with `g = dy/dm`, and its gradient.
pub fn hint_penalty(model: &Model, grid: &[HintPoint]) -> Result<(f64, Model)> {
    if model.kind() != ModelKind::Multi {
        return Err(Error::InvalidInput(
            "the hint penalty applies to the multi model; the single model is convex by construction".into(),
        ));
    }
    let mut grad = model.zeros_like();
    let mut total = 0.0;
    for h in grid {
        let g0 = model.dm(h.m, h.tau_years);
        let g1 = model.dm(h.m + h.delta, h.tau_years);
        if g0 > g1 {
            total += g0 - g1;
            model.accumulate_dm_grads(h.m, h.tau_years, 1.0, &mut grad);
            model.accumulate_dm_grads(h.m + h.delta, h.tau_years, -1.0, &mut grad);
        }
    }
    Ok((total, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<P: ParamBlocks>(state: &mut AdamState, params: &mut P, grads: &P) -> Result<()> {
    let g = grads.flatten();
    let mut x = params.flatten();
    if g.len() != x.len() || g.len() != state.m.len() {
        return Err(Error::InvalidInput(format!(
            "Adam shape mismatch: {} parameters, {} gradients, {} moments",
            x.len(),
            g.len(),
            state.m.len()
        )));
    }
    if let Some(idx) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block: grads.block_of(idx),
        });
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        eps,
    } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..x.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        x[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
    }
    params.load_flat(&x);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub epochs: usize,
    /// When set, the learning rate decays geometrically from `adam.learning_rate`
    /// to this value over the epochs.
    pub final_learning_rate: Option<f64>,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub use_virtuals: bool,
    pub c5_samples: usize,
    pub hint_points: usize,
    pub hint_range: (f64, f64),
    pub hint_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            epochs: 500,
            final_learning_rate: None,
            batch_size: None,
            use_virtuals: true,
            c5_samples: DEFAULT_C5_SAMPLES,
            hint_points: DEFAULT_HINT_POINTS,
            hint_range: DEFAULT_HINT_RANGE,
            hint_delta: DEFAULT_HINT_DELTA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("Adam needs lr > 0, betas in [0, 1) and eps > 0".into()));
        }
        if self.final_learning_rate.is_some_and(|lr| !(lr > 0.0)) {
            return Err(Error::Config("final learning rate must be positive".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub model: Model,
    /// Full-training-set objective entering each epoch, then the final value.
    pub trace: Vec<f64>,
    pub c2_residual: f64,
}

/// Largest hinge violation `max(0, g(m) - g(m + delta))` of `g = dy/dm`
/// over `m in [0.01, 4] x 400`, `tau in [2, 365] days x 30`.
pub fn c2_residual<S: PricingSurface + ?Sized>(model: &S, delta: f64) -> f64 {
    let ms = crate::math::linspace(0.01, 4.0, 400);
    let taus = crate::math::linspace(2.0 / 365.0, 1.0, 30);
    let mut worst = 0.0f64;
    for &tau in &taus {
        for &m in &ms {
            worst = worst.max(model.dm(m, tau) - model.dm(m + delta, tau));
        }
    }
    worst
}

/// The rows and hint points for one training set: records plus, when
/// enabled, expiry and zero-strike virtual contracts; hint points on the
/// distinct maturities when the model is a mixture.
pub fn assemble_training_set(
    records: &[CallRecord],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Vec<VirtualOption>, Vec<HintPoint>)> {
    let virtuals = if cfg.use_virtuals {
        let spots: Vec<f64> = records.iter().map(|r| r.spot).collect();
        let taus: Vec<(u32, f64)> = records.iter().map(|r| (r.tau_days, r.rate)).collect();
        let spot = records.first().map_or(1.0, |r| r.spot);
        let mut v = make_c5_virtuals(&spots, cfg.c5_samples, seed);
        v.extend(make_c6_virtuals(&taus, spot));
        v
    } else {
        Vec::new()
    };
    let hints = if spec.kind == ModelKind::Multi && cfg.loss.hint_weight > 0.0 {
        let taus: Vec<f64> = records.iter().map(|r| r.tau_years).collect();
        make_hint_grid(&taus, cfg.hint_points, cfg.hint_range, cfg.hint_delta)?
    } else {
        Vec::new()
    };
    Ok((virtuals, hints))
}

/// Full training objective at the current parameters.
fn objective(points: &[TrainPoint], hints: &[HintPoint], model: &Model, cfg: &LossConfig) -> Result<(f64, Model)> {
    let mut lv = loss(points, model, cfg)?;
    let mut total = lv.total;
    if cfg.hint_weight > 0.0 && !hints.is_empty() && model.kind() == ModelKind::Multi {
        let (pen, pg) = hint_penalty(model, hints)?;
        total += cfg.hint_weight * pen;
        let mut g = lv.grad.flatten();
        for (a, b) in g.iter_mut().zip(pg.flatten()) {
            *a += cfg.hint_weight * b;
        }
        lv.grad.load_flat(&g);
    }
    Ok((total, lv.grad))
}

/// Trains a network from a seeded initialization. Deterministic per seed.
pub fn train(
    records: &[CallRecord],
    virtuals: &[VirtualOption],
    hints: &[HintPoint],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate()?;
    if records.is_empty() && virtuals.is_empty() {
        return Err(Error::InvalidInput("training needs at least one record".into()));
    }
    let points: Vec<TrainPoint> = records
        .iter()
        .map(TrainPoint::from)
        .chain(virtuals.iter().map(TrainPoint::from))
        .collect();
    let mut model = spec.init(seed);
    let mut adam = AdamState::new(model.num_params(), cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba7c);
    let mut order: Vec<usize> = (0..points.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut last_good: Option<usize> = None;

    // trace[e] is the full objective entering epoch e; the final value is appended after the loop
    for epoch in 0..cfg.epochs {
        let (value, grad) = objective(&points, hints, &model, &cfg.loss)?;
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, last_good });
        }
        trace.push(value);
        if let Some(lr_end) = cfg.final_learning_rate {
            let frac = epoch as f64 / (cfg.epochs.max(2) - 1) as f64;
            adam.config.learning_rate = cfg.adam.learning_rate * (lr_end / cfg.adam.learning_rate).powf(frac);
        }
        match cfg.batch_size {
            Some(bs) if bs < points.len() => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(bs) {
                    let batch: Vec<TrainPoint> = chunk.iter().map(|&i| points[i]).collect();
                    let (_, grad) = objective(&batch, hints, &model, &cfg.loss)?;
                    adam_step(&mut adam, &mut model, &grad).map_err(|e| diverged(e, epoch, last_good))?;
                }
            }
            _ => adam_step(&mut adam, &mut model, &grad).map_err(|e| diverged(e, epoch, last_good))?,
        }
        last_good = Some(epoch);
    }
    let final_loss = objective(&points, hints, &model, &cfg.loss)?.0;
    if !final_loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            last_good,
        });
    }
    trace.push(final_loss);

    let clamped: Vec<String> = model
        .blocks()
        .into_iter()
        .filter(|(name, b)| {
            (name.ends_with("w_tilde") || name.ends_with("w_bar") || name.ends_with("w_hat"))
                && b.iter().any(|w| *w > MAX_LOG_WEIGHT)
        })
        .map(|(name, _)| name)
        .collect();
    if !clamped.is_empty() {
        log::warn!(
            "log-weights exceed the clamp at {MAX_LOG_WEIGHT} in {}",
            clamped.join(", ")
        );
    }

    let residual = c2_residual(&model, cfg.hint_delta);
    let meta = serde_json::json!({
        "config": cfg,
        "records": records.len(),
        "virtual_options": virtuals.len(),
        "hint_points": hints.len(),
        "final_loss": trace.last().copied(),
        "c2_residual": residual,
        "loss_trace": trace,
    });
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(model.clone(), seed, meta),
        model,
        trace,
        c2_residual: residual,
    })
}

fn diverged(e: Error, epoch: usize, last_good: Option<usize>) -> Error {
    match e {
        Error::NonFinite { block } => {
            log::error!("non-finite gradient in {block} at epoch {epoch}");
            Error::Diverged { epoch, last_good }
        }
        other => other,
    }
}

/// What is fitted in each rolling window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EvalMethod {
    Network { spec: ModelSpec },
    Baseline { variant: ModelVariant },
}

impl EvalMethod {
    pub fn name(&self) -> String {
        match self {
            EvalMethod::Network { spec } => spec.kind.to_string(),
            EvalMethod::Baseline { variant } => variant.to_string(),
        }
    }
}

impl std::str::FromStr for EvalMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(EvalMethod::Network {
                spec: ModelSpec::single(ModelSpec::default().hidden),
            }),
            "multi" => Ok(EvalMethod::Network {
                spec: ModelSpec::default(),
            }),
            other => Ok(EvalMethod::Baseline {
                variant: other.parse()?,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train_days: usize,
    pub train: TrainConfig,
    pub calibration: CalibrationOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train_days: 5,
            train: TrainConfig::default(),
            calibration: CalibrationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub train_dates: Vec<NaiveDate>,
    pub test_date: NaiveDate,
    pub train_mse: f64,
    pub train_mape: f64,
    pub test_mse: f64,
    pub test_mape: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub window: usize,
    pub date: NaiveDate,
    pub tau_days: u32,
    pub strike: f64,
    pub spot: f64,
    pub rate: f64,
    pub price: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub method: String,
    pub windows: Vec<WindowResult>,
    pub predictions: Vec<Prediction>,
}

/// Dollar-price MSE and MAPE; the percentage skips zero prices.
pub fn price_metrics(actual: &[f64], predicted: &[f64]) -> (f64, f64) {
    let n = actual.len().max(1) as f64;
    let mse = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n;
    let (sum, count) = actual
        .iter()
        .zip(predicted)
        .filter(|(a, _)| **a > 0.0)
        .fold((0.0, 0usize), |(s, c), (a, p)| (s + ((a - p) / a).abs(), c + 1));
    (mse, if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Fits on `train_days` consecutive dates and tests on the next one,
/// sliding one date at a time. Windows run in parallel and are returned
/// in date order.
pub fn rolling_evaluate(
    records: &[CallRecord],
    method: &EvalMethod,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalOutcome> {
    let days = group_by_date(records);
    let span = cfg.train_days + 1;
    if cfg.train_days == 0 || days.len() < span {
        return Err(Error::InvalidInput(format!(
            "rolling evaluation needs at least {span} distinct dates, found {}",
            days.len()
        )));
    }
    let results: Vec<Option<(WindowResult, Vec<Prediction>)>> = (0..=days.len() - span)
        .into_par_iter()
        .map(|w| evaluate_window(w, &days[w..w + span], method, cfg, seed))
        .collect::<Result<_>>()?;
    let mut windows = Vec::new();
    let mut predictions = Vec::new();
    for (wr, preds) in results.into_iter().flatten() {
        windows.push(wr);
        predictions.extend(preds);
    }
    Ok(EvalOutcome {
        method: method.name(),
        windows,
        predictions,
    })
}

fn evaluate_window(
    index: usize,
    days: &[(NaiveDate, Vec<CallRecord>)],
    method: &EvalMethod,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Option<(WindowResult, Vec<Prediction>)>> {
    let (train_days, test_day) = days.split_at(days.len() - 1);
    let (test_date, test) = (&test_day[0].0, &test_day[0].1);
    if test.is_empty() {
        log::warn!("window {index}: no contracts on test date {test_date}, skipped");
        return Ok(None);
    }
    let train_dates: Vec<NaiveDate> = train_days.iter().map(|(d, _)| *d).collect();
    let train_set: BTreeSet<NaiveDate> = train_dates.iter().copied().collect();
    assert!(!train_set.contains(test_date), "test date leaked into training window");

    let (train_records, train_pred, test_pred): (Vec<CallRecord>, Vec<f64>, Vec<f64>) = match method {
        EvalMethod::Network { spec } => {
            let train_records: Vec<CallRecord> = train_days.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
            debug_assert!(train_records.iter().all(|r| r.date != *test_date));
            let window_seed = seed.wrapping_add(index as u64);
            let (virtuals, hints) = assemble_training_set(&train_records, spec, &cfg.train, window_seed)?;
            let out = train(&train_records, &virtuals, &hints, spec, &cfg.train, window_seed)?;
            let predict = |rs: &[CallRecord]| -> Vec<f64> {
                rs.iter()
                    .map(|r| r.price_from_output(out.model.forward(r.moneyness, r.tau_years)))
                    .collect()
            };
            let tp = predict(&train_records);
            let sp = predict(test);
            (train_records, tp, sp)
        }
        EvalMethod::Baseline { variant } => {
            // only the last training day is used to calibrate
            let last = train_days.last().expect("nonempty window").1.clone();
            let opts = CalibrationOptions {
                seed: seed.wrapping_add(index as u64),
                ..cfg.calibration.clone()
            };
            let fit = calibrate(&last, *variant, &opts)?;
            let pricer = FourierPricer::new(opts.pricer.clone());
            let tp = price_records(&fit.params, &last, &pricer)?;
            let sp = price_records(&fit.params, test, &pricer)?;
            (last, tp, sp)
        }
    };

    let actual_train: Vec<f64> = train_records.iter().map(|r| r.price).collect();
    let actual_test: Vec<f64> = test.iter().map(|r| r.price).collect();
    let (train_mse, train_mape) = price_metrics(&actual_train, &train_pred);
    let (test_mse, test_mape) = price_metrics(&actual_test, &test_pred);
    let predictions = test
        .iter()
        .zip(&test_pred)
        .map(|(r, p)| Prediction {
            window: index,
            date: r.date,
            tau_days: r.tau_days,
            strike: r.strike,
            spot: r.spot,
            rate: r.rate,
            price: r.price,
            predicted: *p,
        })
        .collect();
    Ok(Some((
        WindowResult {
            train_dates,
            test_date: *test_date,
            train_mse,
            train_mape,
            test_mse,
            test_mape,
            n_train: train_records.len(),
            n_test: test.len(),
        },
        predictions,
    )))
}
