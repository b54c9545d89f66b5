use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{exp_weight, ParamBlocks};
use crate::error::{Error, Result};
use crate::math::logistic_parts;
use crate::surface::PricingSurface;

pub(super) fn output_of(units: &[Unit]) -> f64 {
    units.iter().map(|u| u.sp * u.gate * u.c).sum()
}

/// Parameters of the single gated pricing network
///
/// ```text
/// y(m, tau) = sum_j softplus(b~_j - m e^{w~_j}) * sigmoid(b-_j + tau e^{w-_j}) * e^{w^_j}
/// ```
///
/// The exponential reparameterization fixes the sign of every effective
/// weight, which makes `dy/dm <= 0`, `d2y/dm2 >= 0` and `dy/dtau >= 0` hold
/// for any parameter values. There is deliberately no output bias, so
/// `y -> 0` as `m -> infinity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleModelParams {
    pub w_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
    pub w_hat: Vec<f64>,
}

/// Per-hidden-unit intermediate values at one `(m, tau)`.
#[derive(Debug, Clone, Copy)]
pub(super) struct Unit {
    /// e^{w~}
    a: f64,
    /// e^{w-}
    e: f64,
    /// e^{w^}
    c: f64,
    sp: f64,
    sp_d1: f64,
    sp_d2: f64,
    gate: f64,
    gate_d1: f64,
}

impl SingleModelParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            w_tilde: vec![0.0; hidden],
            b_tilde: vec![0.0; hidden],
            w_bar: vec![0.0; hidden],
            b_bar: vec![0.0; hidden],
            w_hat: vec![0.0; hidden],
        }
    }

    /// Weights ~ N(0, 0.1), moneyness biases ~ U[0, 3], maturity biases ~ N(0, 1).
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let weight = Normal::new(0.0, 0.1).expect("valid normal");
        let bias_m = Uniform::new(0.0, 3.0).expect("valid uniform");
        let bias_t = Normal::new(0.0, 1.0).expect("valid normal");
        let mut p = Self::zeros(hidden);
        for j in 0..hidden {
            p.w_tilde[j] = weight.sample(rng);
            p.b_tilde[j] = bias_m.sample(rng);
            p.w_bar[j] = weight.sample(rng);
            p.b_bar[j] = bias_t.sample(rng);
            p.w_hat[j] = weight.sample(rng);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.w_tilde.len()
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.hidden();
        for (name, block) in self.blocks() {
            if block.len() != j {
                return Err(Error::InvalidParameter(format!(
                    "block `{name}` has length {} but hidden width is {j}",
                    block.len()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { block: name });
            }
        }
        Ok(())
    }

    fn unit(&self, j: usize, m: f64, tau: f64) -> Unit {
        let a = exp_weight(self.w_tilde[j]);
        let e = exp_weight(self.w_bar[j]);
        let c = exp_weight(self.w_hat[j]);
        let u = self.b_tilde[j] - m * a;
        let v = self.b_bar[j] + tau * e;
        let (sp, sp_d1, sp_d2) = logistic_parts(u);
        let (_, gate, gate_d1) = logistic_parts(v);
        Unit {
            a,
            e,
            c,
            sp,
            sp_d1,
            sp_d2,
            gate,
            gate_d1,
        }
    }

    fn units(&self, m: f64, tau: f64) -> impl Iterator<Item = Unit> + '_ {
        (0..self.hidden()).map(move |j| self.unit(j, m, tau))
    }

    /// Network output, or an error when any parameter is non-finite.
    pub fn try_forward(&self, m: f64, tau: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.forward(m, tau))
    }

    pub fn forward(&self, m: f64, tau: f64) -> f64 {
        self.units(m, tau).map(|u| u.sp * u.gate * u.c).sum()
    }

    /// The `j`-th summand of the output.
    pub fn summand(&self, j: usize, m: f64, tau: f64) -> f64 {
        let u = self.unit(j, m, tau);
        u.sp * u.gate * u.c
    }

    /// `(y, dy/dm, dy/dtau)` from one pass over the hidden units.
    pub fn forward_with_derivatives(&self, m: f64, tau: f64) -> (f64, f64, f64) {
        self.units(m, tau).fold((0.0, 0.0, 0.0), |(y, dm, dt), u| {
            (
                y + u.sp * u.gate * u.c,
                dm - u.a * u.sp_d1 * u.gate * u.c,
                dt + u.e * u.sp * u.gate_d1 * u.c,
            )
        })
    }

    pub fn forward_dm(&self, m: f64, tau: f64) -> f64 {
        self.units(m, tau).map(|u| -u.a * u.sp_d1 * u.gate * u.c).sum()
    }

    pub fn forward_d2m(&self, m: f64, tau: f64) -> f64 {
        self.units(m, tau).map(|u| u.a * u.a * u.sp_d2 * u.gate * u.c).sum()
    }

    pub fn forward_dtau(&self, m: f64, tau: f64) -> f64 {
        self.units(m, tau).map(|u| u.e * u.sp * u.gate_d1 * u.c).sum()
    }

    /// Accumulates `upstream * dy/dθ` into `grad` and returns `y`.
    pub fn accumulate_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut SingleModelParams) -> f64 {
        self.accumulate_grads_with(m, tau, |_| upstream, grad)
    }

    /// As [`Self::accumulate_grads`], with the upstream factor computed from
    /// `y` so that a loss needs only one pass.
    pub fn accumulate_grads_with<F: FnOnce(f64) -> f64>(
        &self,
        m: f64,
        tau: f64,
        upstream: F,
        grad: &mut SingleModelParams,
    ) -> f64 {
        let units = self.unit_values(m, tau);
        let y = output_of(&units);
        self.accumulate_units(&units, m, tau, upstream(y), grad);
        y
    }

    pub(super) fn unit_values(&self, m: f64, tau: f64) -> Vec<Unit> {
        self.units(m, tau).collect()
    }

    pub(super) fn accumulate_units(
        &self,
        units: &[Unit],
        m: f64,
        tau: f64,
        upstream: f64,
        grad: &mut SingleModelParams,
    ) {
        if upstream == 0.0 {
            return;
        }
        for (j, u) in units.iter().enumerate() {
            let term = u.sp * u.gate * u.c;
            let d_bt = u.sp_d1 * u.gate * u.c;
            let d_bb = u.sp * u.gate_d1 * u.c;
            grad.w_hat[j] += upstream * term;
            grad.b_tilde[j] += upstream * d_bt;
            grad.w_tilde[j] += upstream * d_bt * (-m * u.a);
            grad.b_bar[j] += upstream * d_bb;
            grad.w_bar[j] += upstream * d_bb * tau * u.e;
        }
    }

    /// Accumulates `upstream * d(dy/dm)/dθ` into `grad` and returns `dy/dm`.
    pub fn accumulate_dm_grads(&self, m: f64, tau: f64, upstream: f64, grad: &mut SingleModelParams) -> f64 {
        let mut g = 0.0;
        for j in 0..self.hidden() {
            let u = self.unit(j, m, tau);
            let term = -u.a * u.sp_d1 * u.gate * u.c;
            g += term;
            let d_bt = -u.a * u.sp_d2 * u.gate * u.c;
            let d_bb = -u.a * u.sp_d1 * u.gate_d1 * u.c;
            grad.w_hat[j] += upstream * term;
            grad.b_tilde[j] += upstream * d_bt;
            grad.w_tilde[j] += upstream * (term + d_bt * (-m * u.a));
            grad.b_bar[j] += upstream * d_bb;
            grad.w_bar[j] += upstream * d_bb * tau * u.e;
        }
        g
    }

    /// Gradient of `upstream * y` with respect to every parameter block.
    pub fn param_grads(&self, m: f64, tau: f64, upstream: f64) -> SingleModelParams {
        let mut g = Self::zeros(self.hidden());
        self.accumulate_grads(m, tau, upstream, &mut g);
        g
    }
}

impl ParamBlocks for SingleModelParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_tilde".into(), self.w_tilde.as_slice()),
            ("b_tilde".into(), self.b_tilde.as_slice()),
            ("w_bar".into(), self.w_bar.as_slice()),
            ("b_bar".into(), self.b_bar.as_slice()),
            ("w_hat".into(), self.w_hat.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_tilde.as_mut_slice(),
            self.b_tilde.as_mut_slice(),
            self.w_bar.as_mut_slice(),
            self.b_bar.as_mut_slice(),
            self.w_hat.as_mut_slice(),
        ]
    }
}

impl PricingSurface for SingleModelParams {
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

    fn has_analytic_d2m(&self) -> bool {
        true
    }
}
