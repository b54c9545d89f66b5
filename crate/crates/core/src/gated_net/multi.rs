use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::single::{output_of, SingleModelParams};
use super::ParamBlocks;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::surface::PricingSurface;

/// Mixture of single gated networks blended by a softmax gating network.
///
/// The gating network has one sigmoid hidden layer of width `K_g` fed with
/// the raw `(m, tau)`, followed by an `I`-way softmax. Gating weights are
/// sign-unconstrained.
///
/// `w_dot` is `2 x K_g` row-major (row 0 multiplies `m`, row 1 multiplies
/// `tau`); `w_ddot` is `K_g x I` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiModelParams {
    pub experts: Vec<SingleModelParams>,
    pub w_dot: Vec<f64>,
    pub b_dot: Vec<f64>,
    pub w_ddot: Vec<f64>,
    pub b_ddot: Vec<f64>,
}

/// Gating-network intermediates at one `(m, tau)`.
#[derive(Debug, Clone)]
struct Gating {
    hidden: Vec<f64>,
    weights: Vec<f64>,
    /// dz_i/dm and dz_i/dtau of the pre-softmax scores.
    dz_dm: Vec<f64>,
    dz_dtau: Vec<f64>,
}

impl MultiModelParams {
    pub fn zeros(experts: usize, hidden: usize, gate_hidden: usize) -> Self {
        Self {
            experts: vec![SingleModelParams::zeros(hidden); experts],
            w_dot: vec![0.0; 2 * gate_hidden],
            b_dot: vec![0.0; gate_hidden],
            w_ddot: vec![0.0; gate_hidden * experts],
            b_ddot: vec![0.0; experts],
        }
    }

    /// Experts as in [`SingleModelParams::init`]; gating input and hidden
    /// weights ~ N(0, 1) and biases zero.
    pub fn init<R: Rng + ?Sized>(experts: usize, hidden: usize, gate_hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(experts, hidden, gate_hidden);
        for e in &mut p.experts {
            *e = SingleModelParams::init(hidden, rng);
        }
        let std = Normal::new(0.0, 1.0).expect("valid normal");
        for w in p.w_dot.iter_mut().chain(p.w_ddot.iter_mut()) {
            *w = std.sample(rng);
        }
        p
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn gate_hidden(&self) -> usize {
        self.b_dot.len()
    }

    pub fn hidden(&self) -> usize {
        self.experts.first().map_or(0, SingleModelParams::hidden)
    }

    pub fn validate(&self) -> Result<()> {
        let (i, k) = (self.num_experts(), self.gate_hidden());
        if i == 0 {
            return Err(Error::InvalidParameter("multi model needs at least one expert".into()));
        }
        let j = self.hidden();
        for (n, e) in self.experts.iter().enumerate() {
            e.validate().map_err(|err| match err {
                Error::NonFinite { block } => Error::NonFinite {
                    block: format!("expert[{n}].{block}"),
                },
                other => other,
            })?;
            if e.hidden() != j {
                return Err(Error::InvalidParameter(format!(
                    "expert {n} has hidden width {} (expected {j})",
                    e.hidden()
                )));
            }
        }
        let shapes = [
            ("w_dot", self.w_dot.len(), 2 * k),
            ("w_ddot", self.w_ddot.len(), k * i),
            ("b_ddot", self.b_ddot.len(), i),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::InvalidParameter(format!(
                    "block `{name}` has length {got}, expected {want}"
                )));
            }
        }
        for (name, block) in [
            ("w_dot", &self.w_dot),
            ("b_dot", &self.b_dot),
            ("w_ddot", &self.w_ddot),
            ("b_ddot", &self.b_ddot),
        ] {
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { block: name.into() });
            }
        }
        Ok(())
    }

    fn gating(&self, m: f64, tau: f64) -> Gating {
        let (ni, nk) = (self.num_experts(), self.gate_hidden());
        let mut hidden = Vec::with_capacity(nk);
        let mut dh = Vec::with_capacity(nk);
        for k in 0..nk {
            let h = sigmoid(m * self.w_dot[k] + tau * self.w_dot[nk + k] + self.b_dot[k]);
            hidden.push(h);
            dh.push(h * (1.0 - h));
        }
        let mut z = self.b_ddot.clone();
        let mut dz_dm = vec![0.0; ni];
        let mut dz_dtau = vec![0.0; ni];
        for k in 0..nk {
            let row = &self.w_ddot[k * ni..(k + 1) * ni];
            let sm = dh[k] * self.w_dot[k];
            let st = dh[k] * self.w_dot[nk + k];
            for i in 0..ni {
                z[i] += hidden[k] * row[i];
                dz_dm[i] += sm * row[i];
                dz_dtau[i] += st * row[i];
            }
        }
        Gating {
            hidden,
            weights: softmax(&z),
            dz_dm,
            dz_dtau,
        }
    }

    /// Softmax expert weights at `(m, tau)`.
    pub fn gating_weights(&self, m: f64, tau: f64) -> Vec<f64> {
        self.gating(m, tau).weights
    }

    pub fn forward(&self, m: f64, tau: f64) -> f64 {
        let g = self.gating(m, tau);
        self.experts
            .iter()
            .zip(&g.weights)
            .map(|(e, w)| w * e.forward(m, tau))
            .sum()
    }

    pub fn try_forward(&self, m: f64, tau: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.forward(m, tau))
    }

    fn derivative(&self, m: f64, tau: f64, wrt_m: bool) -> f64 {
        let g = self.gating(m, tau);
        let dz = if wrt_m { &g.dz_dm } else { &g.dz_dtau };
        let zbar: f64 = g.weights.iter().zip(dz).map(|(w, d)| w * d).sum();
        self.experts
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (y, dy_dm, dy_dtau) = e.forward_with_derivatives(m, tau);
                let dy = if wrt_m { dy_dm } else { dy_dtau };
                g.weights[i] * (dy + (dz[i] - zbar) * y)
            })
            .sum()
    }

    pub fn forward_dm(&self, m: f64, tau: f64) -> f64 {
        self.derivative(m, tau, true)
    }

    pub fn forward_dtau(&self, m: f64, tau: f64) -> f64 {
        self.derivative(m, tau, false)
    }

    /// Central difference of the analytic `dy/dm`.
    pub fn forward_d2m(&self, m: f64, tau: f64) -> f64 {
        let h = D2M_STEP;
        if m > h {
            (self.forward_dm(m + h, tau) - self.forward_dm(m - h, tau)) / (2.0 * h)
        } else {
            (self.forward_dm(m + h, tau) - self.forward_dm(m, tau)) / h
        }
    }

    /// Accumulates `upstream * dy/dθ` into `grad` and returns `y`.
    pub fn accumulate_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut MultiModelParams) -> f64 {
        self.accumulate_grads_with(m, tau, |_| upstream, grad)
    }

    /// As [`Self::accumulate_grads`], with the upstream factor computed from `y`.
    pub fn accumulate_grads_with<F: FnOnce(f64) -> f64>(
        &self,
        m: f64,
        tau: f64,
        upstream: F,
        grad: &mut MultiModelParams,
    ) -> f64 {
        let g = self.gating(m, tau);
        let units: Vec<_> = self.experts.iter().map(|e| e.unit_values(m, tau)).collect();
        let ys: Vec<f64> = units.iter().map(|u| output_of(u)).collect();
        let y: f64 = ys.iter().zip(&g.weights).map(|(a, b)| a * b).sum();
        let upstream = upstream(y);
        if upstream == 0.0 {
            return y;
        }
        for (i, e) in self.experts.iter().enumerate() {
            e.accumulate_units(&units[i], m, tau, upstream * g.weights[i], &mut grad.experts[i]);
        }
        // dL/dz_i = upstream * w_i (y_i - y)
        let dz: Vec<f64> = (0..ys.len()).map(|i| upstream * g.weights[i] * (ys[i] - y)).collect();
        self.backprop_gating(&g, m, tau, &dz, None, grad);
        y
    }

    /// Accumulates `upstream * d(dy/dm)/dθ` into `grad` and returns `dy/dm`.
    pub fn accumulate_dm_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut MultiModelParams) -> f64 {
        let g = self.gating(m, tau);
        let ni = self.num_experts();
        let w = &g.weights;
        let zbar: f64 = (0..ni).map(|i| w[i] * g.dz_dm[i]).sum();
        let mut ys = Vec::with_capacity(ni);
        let mut dys = Vec::with_capacity(ni);
        for (i, e) in self.experts.iter().enumerate() {
            dys.push(e.accumulate_dm_grads(m, tau, upstream * w[i], &mut grad.experts[i]));
            ys.push(e.accumulate_grads(m, tau, upstream * w[i] * (g.dz_dm[i] - zbar), &mut grad.experts[i]));
        }
        let y: f64 = (0..ni).map(|i| w[i] * ys[i]).sum();
        let out: f64 = (0..ni).map(|i| w[i] * (dys[i] + (g.dz_dm[i] - zbar) * ys[i])).sum();

        // out = sum_i w_i dy_i + sum_i w_i zm_i y_i - zbar * y
        let gamma: Vec<f64> = (0..ni)
            .map(|i| dys[i] + g.dz_dm[i] * ys[i] - g.dz_dm[i] * y - zbar * ys[i])
            .collect();
        let gbar: f64 = (0..ni).map(|i| w[i] * gamma[i]).sum();
        let dz: Vec<f64> = (0..ni).map(|i| upstream * w[i] * (gamma[i] - gbar)).collect();
        let dzm: Vec<f64> = (0..ni).map(|i| upstream * w[i] * (ys[i] - y)).collect();
        self.backprop_gating(&g, m, tau, &dz, Some(&dzm), grad);
        out
    }

    /// Backpropagates gradients on the softmax scores `z` (and optionally on
    /// their `m`-derivatives `dz/dm`) into the gating parameters.
    fn backprop_gating(
        &self,
        g: &Gating,
        m: f64,
        tau: f64,
        dz: &[f64],
        dzm: Option<&[f64]>,
        grad: &mut MultiModelParams,
    ) {
        let (ni, nk) = (self.num_experts(), self.gate_hidden());
        for (b, d) in grad.b_ddot.iter_mut().zip(dz) {
            *b += d;
        }
        for k in 0..nk {
            let h = g.hidden[k];
            let h1 = h * (1.0 - h);
            let h2 = h1 * (1.0 - 2.0 * h);
            let wm = self.w_dot[k];
            let row = &self.w_ddot[k * ni..(k + 1) * ni];
            let grow = &mut grad.w_ddot[k * ni..(k + 1) * ni];
            let mut d_hidden = 0.0;
            let mut d_slope = 0.0;
            for i in 0..ni {
                grow[i] += dz[i] * h;
                d_hidden += dz[i] * row[i];
                if let Some(dzm) = dzm {
                    grow[i] += dzm[i] * h1 * wm;
                    d_slope += dzm[i] * row[i];
                }
            }
            // pre-activation a_k = m W1k + tau W2k + b_k; slope s_k = h'(a_k) W1k
            let d_pre = d_hidden * h1 + d_slope * wm * h2;
            grad.w_dot[k] += d_pre * m + d_slope * h1;
            grad.w_dot[nk + k] += d_pre * tau;
            grad.b_dot[k] += d_pre;
        }
    }

    /// Gradient of `upstream * y` with respect to every parameter block.
    pub fn param_grads(&self, m: f64, tau: f64, upstream: f64) -> MultiModelParams {
        let mut g = Self::zeros(self.num_experts(), self.hidden(), self.gate_hidden());
        self.accumulate_grads(m, tau, upstream, &mut g);
        g
    }
}

const D2M_STEP: f64 = 1e-4;

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl ParamBlocks for MultiModelParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, e) in self.experts.iter().enumerate() {
            for (name, b) in e.blocks() {
                out.push((format!("expert[{i}].{name}"), b));
            }
        }
        out.push(("w_dot".into(), self.w_dot.as_slice()));
        out.push(("b_dot".into(), self.b_dot.as_slice()));
        out.push(("w_ddot".into(), self.w_ddot.as_slice()));
        out.push(("b_ddot".into(), self.b_ddot.as_slice()));
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for e in &mut self.experts {
            out.extend(e.blocks_mut());
        }
        out.push(self.w_dot.as_mut_slice());
        out.push(self.b_dot.as_mut_slice());
        out.push(self.w_ddot.as_mut_slice());
        out.push(self.b_ddot.as_mut_slice());
        out
    }
}

impl PricingSurface for MultiModelParams {
    fn value(&self, m: f64, tau: f64) -> f64 {
        self.forward(m, tau)
    }

    fn dm(&self, m: f64, tau: f64) -> f64 {
        self.forward_dm(m, tau)
    }

    fn d2m(&self, m: f64, tau: f64) -> f64 {
        self.forward_d2m(m, tau)
    }

    fn dtau(&self, m: f64, tau: f64) -> f64 {
        self.forward_dtau(m, tau)
    }
}
