//! Shannon dropout and the Fisher-trace regularizer.
//!
//! Dropout zeroes each activation independently with probability `rate`
//! (default 0.0118) and rescales survivors by 1/(1-rate); it is a no-op at
//! inference time. The Fisher-trace penalty is
//!
//! ```text
//! R(C) = sum_{i,j,k} 1 / (|fft(c_ij)(k)|^2 + eps)
//! ```
//!
//! which blows up on "dead" coefficient frequencies; its exact gradient is
//! evaluated through the DFT in O(B log B) per block.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::CirculantStack;
use crate::linalg::Mat;
use crate::rng::Rng;
use crate::spectral::{dft, fft_real, Complex};

/// Default per-symbol drop probability.
pub const DEFAULT_DROP_RATE: f64 = 0.0118;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ShannonDropoutConfig {
    pub rate: f64,
    pub enabled: bool,
    pub rng_seed: u64,
}

impl ShannonDropoutConfig {
    pub fn disabled() -> Self {
        ShannonDropoutConfig {
            rate: DEFAULT_DROP_RATE,
            enabled: false,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::invalid(format!(
                "dropout rate must be in [0, 1), got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

impl Default for ShannonDropoutConfig {
    fn default() -> Self {
        Self::disabled()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FisherConfig {
    /// Penalty strength added to the loss.
    pub strength: f64,
    /// Division guard on |spectrum|^2.
    pub epsilon: f64,
}

impl Default for FisherConfig {
    fn default() -> Self {
        FisherConfig {
            strength: 1e-4,
            epsilon: 1e-8,
        }
    }
}

impl FisherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("fisher epsilon must be positive"));
        }
        if self.strength < 0.0 {
            return Err(Error::invalid("fisher strength must be nonnegative"));
        }
        Ok(())
    }
}

/// Apply dropout to a batch. Training mode zeroes entries independently with
/// probability `rate` and scales the survivors by 1/(1-rate); eval mode is
/// the identity. Returns the output and the 0/1 keep-mask.
pub fn shannon_dropout(x: &Mat, rate: f64, rng: &mut Rng, training: bool) -> Result<(Mat, Mat)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    let mut mask = Mat::zeros(x.rows(), x.cols());
    if !training || rate == 0.0 {
        mask.data_mut().fill(1.0);
        return Ok((x.clone(), mask));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(mask.data_mut()) {
        if rng.bernoulli(rate) {
            *v = 0.0;
            *m = 0.0;
        } else {
            *v *= keep_scale;
            *m = 1.0;
        }
    }
    Ok((out, mask))
}

/// Route an upstream gradient through a dropout mask: `dx = dy .* mask / (1-rate)`.
pub fn dropout_backward(dy: &Mat, mask: &Mat, rate: f64) -> Result<Mat> {
    if dy.rows() != mask.rows() || dy.cols() != mask.cols() {
        return Err(Error::invalid("dropout_backward: shape mismatch"));
    }
    let keep_scale = 1.0 / (1.0 - rate);
    let mut dx = dy.clone();
    for (d, &m) in dx.data_mut().iter_mut().zip(mask.data()) {
        *d *= m * keep_scale;
    }
    Ok(dx)
}

/// Trace of the ridge-regularized inverse Fisher information of a CDLinear
/// layer: `sum_{i,j,k} 1/(|fft(c_ij)(k)|^2 + eps)`.
pub fn fisher_trace(params: &CirculantStack, cfg: &FisherConfig) -> Result<f64> {
    cfg.validate()?;
    let mut total = 0.0;
    for i in 0..params.k_out {
        for j in 0..params.k_in {
            let spec = fft_real(params.coeff(i, j))?;
            for v in spec {
                total += 1.0 / (v.abs_sq() + cfg.epsilon);
            }
        }
    }
    Ok(total)
}

/// Exact gradient of `fisher_trace` with respect to every coefficient.
///
/// With p_k = |F c(k)|^2, dR/dc_m = -2 sum_k Re(conj(Fc(k)) e^{+2 pi i km/B})
/// / (p_k + eps)^2, i.e. the forward DFT of h_k = conj(Fc(k))/(p_k+eps)^2.
pub fn fisher_trace_grad(params: &CirculantStack, cfg: &FisherConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let b = params.block;
    let mut grad = vec![0.0; params.coeffs.len()];
    for i in 0..params.k_out {
        for j in 0..params.k_in {
            let spec = fft_real(params.coeff(i, j))?;
            let h: Vec<Complex> = spec
                .iter()
                .map(|&fc| {
                    let denom = fc.abs_sq() + cfg.epsilon;
                    fc.conj().scale(1.0 / (denom * denom))
                })
                .collect();
            let g = dft(&h)?;
            let out =
                &mut grad[(i * params.k_in + j) * b..(i * params.k_in + j + 1) * b];
            for (o, v) in out.iter_mut().zip(g) {
                *o = -2.0 * v.re;
            }
        }
    }
    Ok(grad)
}
