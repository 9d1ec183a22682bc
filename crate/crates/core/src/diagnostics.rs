//! Hessian-spectrum diagnostics.
//!
//! For a block-circulant layer the Hessian of the squared loss with respect
//! to one coefficient block is circulant with eigenvalues
//! `|fft(input block)(k)|^2`, so the whole spectrum is read off the layer's
//! input batch with one FFT per block — no decomposition. The dense baseline
//! is measured the classical way, through the squared singular values of its
//! weight matrix. Both paths report the condition number
//! `kappa = eta_max / eta_min`; a brute-force Hessian constructor and a
//! statistical bound verifier back the closed form.
//!
//! Note the deliberate asymmetry carried in `method`: the circulant path
//! measures input statistics while the dense path measures trained weights.
//! The two are different objects that happen to share the name "Hessian
//! condition number"; reports keep the tag so downstream consumers can tell
//! them apart.

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, SyntheticKind};
use crate::error::{Error, Result};
use crate::layers::LayerSpec;
use crate::linalg::{squared_singular_values, Mat};
use crate::network::Network;
use crate::rng::{streams, Rng};
use crate::spectral::{circulant_matvec_direct, dft_real, fft_real};

/// Smallest eigenvalue treated as nonzero; below this the spectrum is
/// flagged degenerate and kappa reported as infinite (`None`).
pub const DEGENERACY_FLOOR: f64 = 1e-300;

/// Engineering constant in the finite-sample bound `1 + C sqrt(B/N)`.
pub const BOUND_CONSTANT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    CdFft,
    DenseSvd,
    BruteForce,
}

/// Spectrum of one weight layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpectrum {
    pub method: SpectrumMethod,
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
    /// `None` means infinite (degenerate spectrum).
    pub kappa: Option<f64>,
    pub degenerate: bool,
}

impl LayerSpectrum {
    fn from_eigenvalues(method: SpectrumMethod, mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::invalid("spectrum needs at least one eigenvalue"));
        }
        eigenvalues.sort_by(f64::total_cmp);
        let min = eigenvalues[0];
        let max = *eigenvalues.last().unwrap();
        let degenerate = min < DEGENERACY_FLOOR;
        let kappa = if degenerate { None } else { Some(max / min) };
        Ok(LayerSpectrum {
            method,
            eigenvalues,
            kappa,
            degenerate,
        })
    }
}

/// Per-layer spectra of a model plus the layer-averaged condition number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub layers: Vec<LayerSpectrum>,
    /// Arithmetic mean of per-layer kappa; `None` if any layer is degenerate.
    pub mean_kappa: Option<f64>,
}

impl SpectrumReport {
    pub fn from_layers(layers: Vec<LayerSpectrum>) -> Self {
        let mut sum = 0.0;
        let mut all_finite = !layers.is_empty();
        for l in &layers {
            match l.kappa {
                Some(k) => sum += k,
                None => all_finite = false,
            }
        }
        let mean_kappa = all_finite.then(|| sum / layers.len() as f64);
        SpectrumReport { layers, mean_kappa }
    }

    /// Two-column CSV (`layer,eigenvalue`), eigenvalues sorted per layer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,eigenvalue\n");
        for (i, layer) in self.layers.iter().enumerate() {
            for e in &layer.eigenvalues {
                out.push_str(&format!("{i},{e}\n"));
            }
        }
        out
    }
}

/// Closed-form Hessian spectrum of a block-circulant layer from its input
/// batch: `eta_{j,k} = mean_n |fft(X_j^(n))(k)|^2` over the batch, listed for
/// every (block j, frequency k) pair.
pub fn hessian_spectrum_closed_form(inputs: &Mat, block: usize) -> Result<LayerSpectrum> {
    if block == 0 || !inputs.cols().is_multiple_of(block) {
        return Err(Error::invalid(format!(
            "input dim {} not divisible by block {block}",
            inputs.cols()
        )));
    }
    if inputs.rows() == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let k_in = inputs.cols() / block;
    let mut eta = vec![0.0; k_in * block];
    for n in 0..inputs.rows() {
        let row = inputs.row(n);
        for j in 0..k_in {
            let spec = fft_real(&row[j * block..(j + 1) * block])?;
            for (k, v) in spec.iter().enumerate() {
                eta[j * block + k] += v.abs_sq();
            }
        }
    }
    let scale = 1.0 / inputs.rows() as f64;
    for e in eta.iter_mut() {
        *e *= scale;
    }
    LayerSpectrum::from_eigenvalues(SpectrumMethod::CdFft, eta)
}

/// Explicit single-block Hessian of `0.5 * ||conv(c, x) - t||^2` with respect
/// to the coefficients, built from the cyclic-shift formula
/// `H[m][m'] = sum_k x_((k-m) mod B) x_((k-m') mod B)`.
///
/// Verifies that H is circulant (every entry depends only on `m'-m`) to
/// 1e-12 and that it matches second-order central finite differences of the
/// loss to 1e-4 relative, then returns H with its eigenvalues (the DFT of
/// its first row, sorted ascending).
pub fn hessian_brute_force(c: &[f64], x: &[f64], t: &[f64]) -> Result<(Mat, Vec<f64>)> {
    let b = x.len();
    if b == 0 || c.len() != b || t.len() != b {
        return Err(Error::invalid(
            "hessian_brute_force: c, x, t must share a nonzero length",
        ));
    }
    if b > 16 {
        return Err(Error::invalid("hessian_brute_force is a small-B oracle"));
    }

    let mut h = Mat::zeros(b, b);
    for m in 0..b {
        for mp in 0..b {
            let mut acc = 0.0;
            for k in 0..b {
                acc += x[(b + k - m) % b] * x[(b + k - mp) % b];
            }
            h.set(m, mp, acc);
        }
    }

    // circulant check: entries constant along each diagonal difference class
    let scale = h.data().iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    for m in 0..b {
        for mp in 0..b {
            let d = (b + mp - m) % b;
            let diff = (h.get(m, mp) - h.get(0, d)).abs();
            if diff > 1e-12 * scale {
                return Err(Error::Internal(format!(
                    "brute-force Hessian is not circulant: |H[{m}][{mp}] - H[0][{d}]| = {diff}"
                )));
            }
        }
    }

    // finite-difference cross-check; the loss is quadratic in c, so central
    // second differences reproduce H up to rounding
    let loss = |cv: &[f64]| -> Result<f64> {
        let y = circulant_matvec_direct(cv, x)?;
        Ok(y.iter().zip(t).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum())
    };
    let step = 1e-3;
    let mut cv = c.to_vec();
    for m in 0..b {
        for mp in m..b {
            let fd = if m == mp {
                let base = loss(&cv)?;
                cv[m] = c[m] + step;
                let up = loss(&cv)?;
                cv[m] = c[m] - step;
                let down = loss(&cv)?;
                cv[m] = c[m];
                (up - 2.0 * base + down) / (step * step)
            } else {
                cv[m] = c[m] + step;
                cv[mp] = c[mp] + step;
                let pp = loss(&cv)?;
                cv[mp] = c[mp] - step;
                let pm = loss(&cv)?;
                cv[m] = c[m] - step;
                let mm = loss(&cv)?;
                cv[mp] = c[mp] + step;
                let mp_v = loss(&cv)?;
                cv[m] = c[m];
                cv[mp] = c[mp];
                (pp - pm - mp_v + mm) / (4.0 * step * step)
            };
            let diff = (fd - h.get(m, mp)).abs();
            if diff > 1e-4 * scale.max(1.0) {
                return Err(Error::Internal(format!(
                    "finite-difference Hessian mismatch at ({m},{mp}): {fd} vs {}",
                    h.get(m, mp)
                )));
            }
        }
    }

    let mut eig: Vec<f64> = dft_real(h.row(0))?
        .iter()
        .map(|v| v.re.max(0.0))
        .collect();
    eig.sort_by(f64::total_cmp);
    Ok((h, eig))
}

/// Squared singular values of a dense weight matrix.
pub fn dense_hessian_spectrum(w: &Mat) -> Result<LayerSpectrum> {
    if w.rows() > 128 || w.cols() > 128 {
        return Err(Error::invalid("dense spectrum path is desk-scale (<=128)"));
    }
    if !w.all_finite() {
        return Err(Error::invalid("weight matrix has non-finite entries"));
    }
    let eig = squared_singular_values(w)?;
    LayerSpectrum::from_eigenvalues(SpectrumMethod::DenseSvd, eig)
}

/// Spectrum report for every weight layer of a network on a data batch:
/// circulant layers through the closed form on their recorded inputs, dense
/// layers through the SVD of their weights.
pub fn model_condition_number(net: &Network, batch: &Mat) -> Result<SpectrumReport> {
    let recorded = net.weight_layer_inputs(batch)?;
    let mut layers = Vec::new();
    for ((spec, inputs), params) in recorded.iter().zip(
        net.params
            .iter()
            .filter(|p| !matches!(p, crate::network::LayerParams::Relu { .. })),
    ) {
        match spec {
            LayerSpec::CdLinear { block, .. } => {
                layers.push(hessian_spectrum_closed_form(inputs, *block)?);
            }
            LayerSpec::Dense { .. } => {
                let w = match params {
                    crate::network::LayerParams::Dense(d) => d.weight_mat(),
                    _ => return Err(Error::Internal("spec/params misalignment".into())),
                };
                layers.push(dense_hessian_spectrum(&w)?);
            }
            LayerSpec::Relu { .. } => unreachable!("filtered above"),
        }
    }
    Ok(SpectrumReport::from_layers(layers))
}

/// One N-sweep entry of the condition-bound check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundEntry {
    pub block: usize,
    pub n_samples: usize,
    pub bound: f64,
    pub kappas: Vec<f64>,
    pub fraction_within: f64,
    pub median_kappa: f64,
    /// median (kappa - 1) / sqrt(B/N)
    pub median_normalized_excess: f64,
}

/// Empirical check of the finite-sample condition-number bound: draw `trials`
/// batches of `n_samples` signals whose per-frequency variance is 1 by
/// construction, measure the empirical spectrum's kappa, and compare with
/// `1 + 5 sqrt(B/N)`. In population mode the analytic spectrum (all ones) is
/// substituted, which gives kappa = 1 exactly.
pub fn verify_condition_bound(
    block: usize,
    n_samples: usize,
    trials: usize,
    seed: u64,
    population: bool,
) -> Result<BoundEntry> {
    if block == 0 {
        return Err(Error::invalid("block must be positive"));
    }
    if n_samples < block {
        return Err(Error::invalid(format!(
            "need at least B={block} samples, got {n_samples}"
        )));
    }
    let ratio = (block as f64 / n_samples as f64).sqrt();
    let bound = 1.0 + BOUND_CONSTANT * ratio;

    let mut kappas = Vec::with_capacity(trials);
    let mut rng = Rng::from_seed_stream(seed, streams::SYNTHETIC);
    for _ in 0..trials {
        if population {
            // population Hessian: eta_k = E|F[X](k)|^2 = 1 for all k
            kappas.push(1.0);
            continue;
        }
        let trial_seed = rng.next_u64();
        // i.i.d. N(0, 1/B) entries make each DFT coefficient unit-variance
        let mut batch = gen_synthetic(SyntheticKind::Gaussian, n_samples, block, block, trial_seed)?;
        let scale = 1.0 / (block as f64).sqrt();
        for v in batch.data_mut() {
            *v *= scale;
        }
        let spectrum = hessian_spectrum_closed_form(&batch, block)?;
        match spectrum.kappa {
            Some(k) => kappas.push(k),
            None => kappas.push(f64::INFINITY),
        }
    }

    let within = kappas.iter().filter(|&&k| k <= bound).count();
    let mut sorted = kappas.clone();
    sorted.sort_by(f64::total_cmp);
    let median_kappa = sorted[sorted.len() / 2];
    Ok(BoundEntry {
        block,
        n_samples,
        bound,
        fraction_within: within as f64 / trials.max(1) as f64,
        median_normalized_excess: (median_kappa - 1.0) / ratio,
        median_kappa,
        kappas,
    })
}
