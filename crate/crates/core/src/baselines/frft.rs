use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Grid geometry for one transform evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrftPlan {
    pub n: usize,
    pub alpha: f64,
    /// Spacing of the integration grid in frequency.
    pub eta: f64,
    /// Spacing of the output grid in log strike.
    pub lambda: f64,
}

impl FrftPlan {
    pub fn new(n: usize, alpha: f64, eta: f64, lambda: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::Config(format!("FRFT size {n} is not a power of two")));
        }
        if !(alpha > 0.0 && eta > 0.0 && lambda > 0.0) {
            return Err(Error::Config("FRFT damping and spacings must be positive".into()));
        }
        Ok(Self { n, alpha, eta, lambda })
    }

    /// `eta * lambda / (2 pi)`.
    pub fn fractional_parameter(&self) -> f64 {
        self.eta * self.lambda / (2.0 * PI)
    }
}

/// Fractional DFT `X_j = sum_n x_n exp(-2 pi i gamma j n)` in `O(N log N)`.
///
/// Uses the chirp factorization `jn = (j^2 + n^2 - (j - n)^2) / 2`, turning
/// the sum into a circular convolution of length `2N` evaluated with three
/// FFTs.
pub fn frft(x: &[Complex64], gamma: f64) -> Result<Vec<Complex64>> {
    let n = x.len();
    if !n.is_power_of_two() {
        return Err(Error::InvalidInput(format!("FRFT length {n} is not a power of two")));
    }
    let chirp = |k: usize| {
        // reduce k^2 gamma modulo 2 before forming the phase to keep it small
        let kk = (k as f64) * (k as f64);
        let phase = PI * (kk * gamma).rem_euclid(2.0);
        Complex64::from_polar(1.0, phase)
    };
    let m = 2 * n;
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        let c = chirp(k);
        a[k] = x[k] * c.conj();
        b[k] = c;
        if k > 0 {
            b[m - k] = c;
        }
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    inv.process(&mut a);
    let scale = 1.0 / m as f64;
    Ok((0..n).map(|j| chirp(j).conj() * a[j] * scale).collect())
}

/// Plain `O(N)`-per-output DFT `X_j = sum_n x_n exp(-2 pi i j n / N)` via rustfft.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    FftPlanner::<f64>::new().plan_fft_forward(x.len()).process(&mut buf);
    buf
}
