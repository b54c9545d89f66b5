//! Gated pricing networks: the single two-branch model and the gated
//! mixture of single models, with analytic input derivatives and
//! hand-written parameter gradients.

mod multi;
mod single;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use multi::MultiModelParams;
pub use single::SingleModelParams;

use crate::error::{Error, Result};
use crate::surface::PricingSurface;

/// Upper clamp on the exponent of reparameterized weights.
pub const MAX_LOG_WEIGHT: f64 = 20.0;

/// `e^w` with `w` clamped at [`MAX_LOG_WEIGHT`].
#[inline]
pub fn exp_weight(w: f64) -> f64 {
    w.min(MAX_LOG_WEIGHT).exp()
}

/// Named parameter blocks with a stable flattening order.
pub trait ParamBlocks {
    fn blocks(&self) -> Vec<(String, &[f64])>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flat_map(|(_, b)| b.to_vec()).collect()
    }

    fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Name of the block containing flat index `idx`.
    fn block_of(&self, idx: usize) -> String {
        let mut offset = 0;
        for (name, b) in self.blocks() {
            if idx < offset + b.len() {
                return format!("{name}[{}]", idx - offset);
            }
            offset += b.len();
        }
        format!("<index {idx}>")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Single,
    Multi,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(ModelKind::Single),
            "multi" => Ok(ModelKind::Multi),
            other => Err(Error::InvalidInput(format!("unknown model type `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Single => "single",
            ModelKind::Multi => "multi",
        })
    }
}

/// Architecture hyperparameters: hidden width `J`, expert count `I` and
/// gating hidden width `K_g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
    pub experts: usize,
    pub gate_hidden: usize,
}

impl ModelSpec {
    pub fn single(hidden: usize) -> Self {
        Self {
            kind: ModelKind::Single,
            hidden,
            experts: 1,
            gate_hidden: 0,
        }
    }

    pub fn multi(hidden: usize, experts: usize, gate_hidden: usize) -> Self {
        Self {
            kind: ModelKind::Multi,
            hidden,
            experts,
            gate_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width J must be positive".into()));
        }
        if self.kind == ModelKind::Multi && (self.experts == 0 || self.gate_hidden == 0) {
            return Err(Error::Config("multi model needs I >= 1 and K_g >= 1".into()));
        }
        Ok(())
    }

    pub fn init(&self, seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self.kind {
            ModelKind::Single => Model::Single(SingleModelParams::init(self.hidden, &mut rng)),
            ModelKind::Multi => Model::Multi(MultiModelParams::init(
                self.experts,
                self.hidden,
                self.gate_hidden,
                &mut rng,
            )),
        }
    }
}

impl Default for ModelSpec {
    /// `J = 5`, `I = 9`, `K_g = 5`.
    fn default() -> Self {
        Self::multi(5, 9, 5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "parameters", rename_all = "lowercase")]
pub enum Model {
    Single(SingleModelParams),
    Multi(MultiModelParams),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Single(_) => ModelKind::Single,
            Model::Multi(_) => ModelKind::Multi,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Single(p) => ModelSpec::single(p.hidden()),
            Model::Multi(p) => ModelSpec::multi(p.hidden(), p.num_experts(), p.gate_hidden()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Model::Single(p) => p.validate(),
            Model::Multi(p) => p.validate(),
        }
    }

    pub fn zeros_like(&self) -> Model {
        match self {
            Model::Single(p) => Model::Single(SingleModelParams::zeros(p.hidden())),
            Model::Multi(p) => Model::Multi(MultiModelParams::zeros(p.num_experts(), p.hidden(), p.gate_hidden())),
        }
    }

    pub fn forward(&self, m: f64, tau: f64) -> f64 {
        match self {
            Model::Single(p) => p.forward(m, tau),
            Model::Multi(p) => p.forward(m, tau),
        }
    }

    /// Accumulates `upstream * dy/dθ` into `grad` (same variant) and returns `y`.
    pub fn accumulate_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut Model) -> f64 {
        match (self, grad) {
            (Model::Single(p), Model::Single(g)) => p.accumulate_grads(m, tau, upstream, g),
            (Model::Multi(p), Model::Multi(g)) => p.accumulate_grads(m, tau, upstream, g),
            _ => panic!("gradient container variant mismatch"),
        }
    }

    /// Accumulates `upstream(y) * dy/dθ` into `grad` in a single pass and returns `y`.
    pub fn accumulate_grads_with<F: FnOnce(f64) -> f64>(&self, m: f64, tau: f64, upstream: F, grad: &mut Model) -> f64 {
        match (self, grad) {
            (Model::Single(p), Model::Single(g)) => p.accumulate_grads_with(m, tau, upstream, g),
            (Model::Multi(p), Model::Multi(g)) => p.accumulate_grads_with(m, tau, upstream, g),
            _ => panic!("gradient container variant mismatch"),
        }
    }

    /// Accumulates `upstream * d(dy/dm)/dθ` into `grad` and returns `dy/dm`.
    pub fn accumulate_dm_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut Model) -> f64 {
        match (self, grad) {
            (Model::Single(p), Model::Single(g)) => p.accumulate_dm_grads(m, tau, upstream, g),
            (Model::Multi(p), Model::Multi(g)) => p.accumulate_dm_grads(m, tau, upstream, g),
            _ => panic!("gradient container variant mismatch"),
        }
    }
}

impl ParamBlocks for Model {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        match self {
            Model::Single(p) => p.blocks(),
            Model::Multi(p) => p.blocks(),
        }
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Single(p) => p.blocks_mut(),
            Model::Multi(p) => p.blocks_mut(),
        }
    }
}

impl PricingSurface for Model {
    fn value(&self, m: f64, tau: f64) -> f64 {
        self.forward(m, tau)
    }

    fn dm(&self, m: f64, tau: f64) -> f64 {
        match self {
            Model::Single(p) => p.forward_dm(m, tau),
            Model::Multi(p) => p.forward_dm(m, tau),
        }
    }

    fn d2m(&self, m: f64, tau: f64) -> f64 {
        match self {
            Model::Single(p) => p.forward_d2m(m, tau),
            Model::Multi(p) => p.forward_d2m(m, tau),
        }
    }

    fn dtau(&self, m: f64, tau: f64) -> f64 {
        match self {
            Model::Single(p) => p.forward_dtau(m, tau),
            Model::Multi(p) => p.forward_dtau(m, tau),
        }
    }

    fn has_analytic_d2m(&self) -> bool {
        matches!(self, Model::Single(_))
    }
}

/// Serialized model plus the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(rename = "J")]
    pub hidden: usize,
    #[serde(rename = "I")]
    pub experts: usize,
    #[serde(rename = "K_g")]
    pub gate_hidden: usize,
    #[serde(flatten)]
    pub model: Model,
    pub seed: u64,
    pub training: serde_json::Value,
}

impl Checkpoint {
    pub fn new(model: Model, seed: u64, training: serde_json::Value) -> Self {
        let spec = model.spec();
        Self {
            hidden: spec.hidden,
            experts: spec.experts,
            gate_hidden: spec.gate_hidden,
            model,
            seed,
            training,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.model.validate()?;
        if ck.model.spec().hidden != ck.hidden {
            return Err(Error::InvalidParameter("checkpoint J does not match parameters".into()));
        }
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
