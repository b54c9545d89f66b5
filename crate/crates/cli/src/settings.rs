//! Flat `key = value` configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gated_pricing::baselines::{CalibrationObjective, CalibrationOptions, LevyDynamics};
use gated_pricing::gated_net::{ModelKind, ModelSpec};
use gated_pricing::market_data::parse_date;
use gated_pricing::synthesis::{SpotPath, SyntheticSurfaceSpec};
use gated_pricing::training::{EvalConfig, TrainConfig};
use serde::Serialize;

/// Every tunable the pipeline exposes. Defaults come from the library.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Settings {
    pub model: ModelSpec,
    pub eval: EvalConfig,
    pub synth: SyntheticSurfaceSpec,
    pub seed: u64,
}

/// Recognized keys, in the order `keys` lists them.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master random seed"),
    ("model", "network type: single | multi"),
    ("hidden", "hidden units J per network"),
    ("experts", "expert count I (multi)"),
    ("gate_hidden", "gating hidden width K_g (multi)"),
    ("mse_weight", "weight of the MSE term"),
    ("mape_weight", "weight of the MAPE term"),
    ("hint_weight", "weight of the convexity hint penalty (multi)"),
    ("virtual_weight", "loss weight of each virtual option"),
    ("learning_rate", "Adam step size"),
    ("final_learning_rate", "decay the step size geometrically to this value"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("eps", "Adam epsilon"),
    ("epochs", "training epochs"),
    ("batch_size", "minibatch size; 0 means full batch"),
    (
        "use_virtuals",
        "append expiry and zero-strike virtual options: true | false",
    ),
    ("c5_samples", "expiry virtual options per spot level"),
    ("hint_points", "hint points per maturity"),
    ("hint_m_min", "lower moneyness of the hint grid"),
    ("hint_m_max", "upper moneyness of the hint grid"),
    ("hint_delta", "moneyness step of the hint penalty"),
    ("train_days", "training dates per rolling window"),
    ("calib_starts", "calibration multi-starts"),
    ("calib_max_evals", "simplex evaluations per start"),
    ("calib_objective", "calibration objective: mse | mape"),
    ("generator", "synthetic market model: bs | vg | kou"),
    ("sigma", "diffusion volatility of the generator"),
    ("nu", "VG variance rate"),
    ("theta", "VG drift"),
    ("lambda", "Kou jump intensity"),
    ("p_up", "Kou upward jump probability"),
    ("eta1", "Kou upward jump rate"),
    ("eta2", "Kou downward jump rate"),
    ("rate", "risk-free rate of the synthetic market"),
    ("div_yield", "dividend yield of the synthetic market"),
    ("start_date", "first synthetic trading date, YYYY-MM-DD"),
    ("n_dates", "synthetic trading dates"),
    ("spot", "initial synthetic spot level"),
    ("spot_vol", "volatility of the synthetic spot path"),
    ("tau_days", "comma-separated synthetic maturities in days"),
    ("strikes_per_tau", "listed strikes per maturity"),
    ("m_min", "lowest listed moneyness"),
    ("m_max", "highest listed moneyness"),
    ("strike_step", "strike rounding increment"),
    ("min_price_frac", "delist contracts cheaper than this fraction of spot"),
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("config key `{key}`: cannot parse `{v}`"))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("config key `{key}`: expected true or false, got `{v}`"),
    }
}

/// Kou defaults fill in parameters the chosen generator needs but the config omits.
fn with_generator(current: LevyDynamics, name: &str) -> Result<LevyDynamics> {
    let sigma = match current {
        LevyDynamics::Bs { sigma } | LevyDynamics::Vg { sigma, .. } | LevyDynamics::Kou { sigma, .. } => sigma,
    };
    Ok(match name.to_ascii_lowercase().as_str() {
        "bs" => LevyDynamics::Bs { sigma },
        "vg" => match current {
            v @ LevyDynamics::Vg { .. } => v,
            _ => LevyDynamics::Vg {
                sigma: 0.12,
                nu: 0.2,
                theta: -0.14,
            },
        },
        "kou" => match current {
            k @ LevyDynamics::Kou { .. } => k,
            _ => LevyDynamics::Kou {
                sigma,
                lambda: 1.0,
                p_up: 0.4,
                eta1: 10.0,
                eta2: 5.0,
            },
        },
        other => bail!("unknown generator `{other}`"),
    })
}

fn set_levy(d: &mut LevyDynamics, key: &str, v: f64) -> Result<()> {
    let slot = match (d, key) {
        (LevyDynamics::Bs { sigma }, "sigma")
        | (LevyDynamics::Vg { sigma, .. }, "sigma")
        | (LevyDynamics::Kou { sigma, .. }, "sigma") => sigma,
        (LevyDynamics::Vg { nu, .. }, "nu") => nu,
        (LevyDynamics::Vg { theta, .. }, "theta") => theta,
        (LevyDynamics::Kou { lambda, .. }, "lambda") => lambda,
        (LevyDynamics::Kou { p_up, .. }, "p_up") => p_up,
        (LevyDynamics::Kou { eta1, .. }, "eta1") => eta1,
        (LevyDynamics::Kou { eta2, .. }, "eta2") => eta2,
        (d, _) => bail!("config key `{key}` does not apply to generator {:?}", d.variant()),
    };
    *slot = v;
    Ok(())
}

impl Settings {
    fn train_mut(&mut self) -> &mut TrainConfig {
        &mut self.eval.train
    }

    pub fn calibration(&self) -> &CalibrationOptions {
        &self.eval.calibration
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let v = v.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "model" => {
                let kind: ModelKind = v.parse()?;
                self.model = match kind {
                    ModelKind::Single => ModelSpec::single(self.model.hidden),
                    ModelKind::Multi => ModelSpec::multi(
                        self.model.hidden,
                        self.model.experts.max(ModelSpec::default().experts),
                        self.model.gate_hidden.max(ModelSpec::default().gate_hidden),
                    ),
                };
            }
            "hidden" => self.model.hidden = num(key, v)?,
            "experts" => self.model.experts = num(key, v)?,
            "gate_hidden" => self.model.gate_hidden = num(key, v)?,
            "mse_weight" => self.train_mut().loss.mse_weight = num(key, v)?,
            "mape_weight" => self.train_mut().loss.mape_weight = num(key, v)?,
            "hint_weight" => self.train_mut().loss.hint_weight = num(key, v)?,
            "virtual_weight" => self.train_mut().loss.virtual_weight = num(key, v)?,
            "learning_rate" => self.train_mut().adam.learning_rate = num(key, v)?,
            "final_learning_rate" => {
                self.train_mut().final_learning_rate = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(num(key, v)?)
                }
            }
            "beta1" => self.train_mut().adam.beta1 = num(key, v)?,
            "beta2" => self.train_mut().adam.beta2 = num(key, v)?,
            "eps" => self.train_mut().adam.eps = num(key, v)?,
            "epochs" => self.train_mut().epochs = num(key, v)?,
            "batch_size" => {
                let n: usize = num(key, v)?;
                self.train_mut().batch_size = (n > 0).then_some(n);
            }
            "use_virtuals" => self.train_mut().use_virtuals = flag(key, v)?,
            "c5_samples" => self.train_mut().c5_samples = num(key, v)?,
            "hint_points" => self.train_mut().hint_points = num(key, v)?,
            "hint_m_min" => self.train_mut().hint_range.0 = num(key, v)?,
            "hint_m_max" => self.train_mut().hint_range.1 = num(key, v)?,
            "hint_delta" => self.train_mut().hint_delta = num(key, v)?,
            "train_days" => self.eval.train_days = num(key, v)?,
            "calib_starts" => self.eval.calibration.starts = num(key, v)?,
            "calib_max_evals" => self.eval.calibration.max_evals = num(key, v)?,
            "calib_objective" => {
                self.eval.calibration.objective = match v.to_ascii_lowercase().as_str() {
                    "mse" => CalibrationObjective::Mse,
                    "mape" => CalibrationObjective::Mape,
                    other => bail!("unknown calibration objective `{other}`"),
                }
            }
            "generator" => self.synth.generator = with_generator(self.synth.generator, v)?,
            "sigma" | "nu" | "theta" | "lambda" | "p_up" | "eta1" | "eta2" => {
                set_levy(&mut self.synth.generator, key, num(key, v)?)?
            }
            "rate" => self.synth.rate = num(key, v)?,
            "div_yield" => self.synth.div_yield = num(key, v)?,
            "start_date" => self.synth.start_date = parse_date(v)?,
            "n_dates" => self.synth.n_dates = num(key, v)?,
            "spot" | "spot_vol" => {
                let (start, vol) = match self.synth.spot_path {
                    SpotPath::Gbm { start, vol } => (start, vol),
                    SpotPath::Given { .. } => (1000.0, 0.0),
                };
                let x: f64 = num(key, v)?;
                self.synth.spot_path = if key == "spot" {
                    SpotPath::Gbm { start: x, vol }
                } else {
                    SpotPath::Gbm { start, vol: x }
                };
            }
            "tau_days" => {
                self.synth.tau_days = v.split(',').map(|d| num::<u32>(key, d.trim())).collect::<Result<_>>()?
            }
            "strikes_per_tau" => self.synth.strikes_per_tau = num(key, v)?,
            "m_min" => self.synth.m_range.0 = num(key, v)?,
            "m_max" => self.synth.m_range.1 = num(key, v)?,
            "strike_step" => self.synth.strike_step = num(key, v)?,
            "min_price_frac" => self.synth.min_price_frac = num(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Applies a config file; later lines override earlier ones.
    pub fn load_file(&mut self, path: &Path) -> Result<BTreeMap<String, String>> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let entries = parse_flat(&text).with_context(|| format!("in config {}", path.display()))?;
        for (k, v) in &entries {
            self.set(k, v)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        Ok(entries)
    }
}

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
