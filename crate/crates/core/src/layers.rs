//! Differentiable layers: the block-circulant linear layer (CDLinear), a
//! dense baseline, ReLU, mean-squared-error loss, and logit slicing, each
//! with a hand-derived backward pass.
//!
//! A CDLinear layer with input dim `n_in`, output dim `n_out`, and block
//! size `B` holds a `K_o x K_i` grid of B x B circulant blocks
//! (`K_o = n_out / B`, `K_i = n_in / B`), each parameterized by its defining
//! coefficient vector. Forward is a sum of FFT circular convolutions; the
//! weight gradient is a cross-correlation and the input gradient is a
//! convolution against index-reversed coefficients. Weight parameter count is
//! `n_in * n_out / B`, a factor-of-B reduction over dense.
//!
//! All batch arguments are `Mat` with one sample per row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::spectral::{fft_real, ifft, Complex};

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// One layer of an architecture description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { n_in: usize, n_out: usize },
    CdLinear { n_in: usize, n_out: usize, block: usize },
    Relu { dim: usize },
}

impl LayerSpec {
    pub fn n_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { n_in, .. } => n_in,
            LayerSpec::CdLinear { n_in, .. } => n_in,
            LayerSpec::Relu { dim } => dim,
        }
    }

    pub fn n_out(&self) -> usize {
        match *self {
            LayerSpec::Dense { n_out, .. } => n_out,
            LayerSpec::CdLinear { n_out, .. } => n_out,
            LayerSpec::Relu { dim } => dim,
        }
    }

    pub fn is_weight_layer(&self) -> bool {
        !matches!(self, LayerSpec::Relu { .. })
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { n_in, n_out } => n_in * n_out + n_out,
            LayerSpec::CdLinear { n_in, n_out, block } => n_in * n_out / block + n_out,
            LayerSpec::Relu { .. } => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense { n_in, n_out } => {
                if n_in == 0 || n_out == 0 {
                    return Err(Error::invalid("dense dims must be positive"));
                }
            }
            LayerSpec::CdLinear { n_in, n_out, block } => {
                if n_in == 0 || n_out == 0 || block == 0 {
                    return Err(Error::invalid("cdlinear dims must be positive"));
                }
                if n_in % block != 0 || n_out % block != 0 {
                    return Err(Error::invalid(format!(
                        "block size {block} must divide both n_in={n_in} and n_out={n_out}"
                    )));
                }
            }
            LayerSpec::Relu { dim } => {
                if dim == 0 {
                    return Err(Error::invalid("relu dim must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// A full architecture: layers chained input-to-output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec {
            name: name.into(),
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for layer in &self.layers {
            layer.validate()?;
        }
        for pair in self.layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::invalid(format!(
                    "layer chain mismatch: {} -> {}",
                    pair[0].n_out(),
                    pair[1].n_in()
                )));
            }
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }
}

/// Total parameter count of an architecture.
pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.layers.iter().map(|l| l.param_count()).sum()
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Parameters of a CDLinear layer: the `K_o x K_i x B` tensor of circulant
/// coefficient vectors plus an `n_out` bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculantStack {
    pub k_out: usize,
    pub k_in: usize,
    pub block: usize,
    /// Flattened [k_out][k_in][block].
    pub coeffs: Vec<f64>,
    pub bias: Vec<f64>,
}

impl CirculantStack {
    pub fn zeros(n_in: usize, n_out: usize, block: usize) -> Result<Self> {
        LayerSpec::CdLinear { n_in, n_out, block }.validate()?;
        Ok(CirculantStack {
            k_out: n_out / block,
            k_in: n_in / block,
            block,
            coeffs: vec![0.0; n_in * n_out / block],
            bias: vec![0.0; n_out],
        })
    }

    pub fn n_in(&self) -> usize {
        self.k_in * self.block
    }

    pub fn n_out(&self) -> usize {
        self.k_out * self.block
    }

    #[inline]
    fn coeff_offset(&self, i: usize, j: usize) -> usize {
        (i * self.k_in + j) * self.block
    }

    pub fn coeff(&self, i: usize, j: usize) -> &[f64] {
        let off = self.coeff_offset(i, j);
        &self.coeffs[off..off + self.block]
    }

    pub fn coeff_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let off = self.coeff_offset(i, j);
        &mut self.coeffs[off..off + self.block]
    }

    pub fn param_count(&self) -> usize {
        self.coeffs.len() + self.bias.len()
    }

    /// Assemble the equivalent dense weight matrix (oracle/diagnostic path).
    pub fn materialize(&self) -> Mat {
        let b = self.block;
        let mut w = Mat::zeros(self.n_out(), self.n_in());
        for i in 0..self.k_out {
            for j in 0..self.k_in {
                let c = self.coeff(i, j);
                for k in 0..b {
                    for l in 0..b {
                        w.set(i * b + k, j * b + l, c[(b + k - l) % b]);
                    }
                }
            }
        }
        w
    }

    /// Forward spectra of every coefficient block, flattened [i][j].
    fn coeff_spectra(&self) -> Result<Vec<Vec<Complex>>> {
        let mut out = Vec::with_capacity(self.k_out * self.k_in);
        for i in 0..self.k_out {
            for j in 0..self.k_in {
                out.push(fft_real(self.coeff(i, j))?);
            }
        }
        Ok(out)
    }
}

/// Parameters of the dense baseline layer, `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major n_out x n_in.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseParams {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn weight_mat(&self) -> Mat {
        Mat::from_vec(self.n_out, self.n_in, self.weight.clone()).expect("consistent dims")
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Gradients of a CDLinear layer, same layout as the parameters.
#[derive(Debug, Clone)]
pub struct CirculantGrads {
    pub coeffs: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients of a dense layer.
#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

// ---------------------------------------------------------------------------
// CDLinear forward / backward
// ---------------------------------------------------------------------------

fn check_batch_dim(x: &Mat, want: usize, what: &str) -> Result<()> {
    if x.cols() != want {
        return Err(Error::invalid(format!(
            "{what}: expected dim {want}, got {}",
            x.cols()
        )));
    }
    Ok(())
}

/// Block-circulant forward map. Per sample, the input splits into `K_i`
/// blocks; output block i is `bias_i + sum_j conv(c_ij, X_j)`, evaluated by
/// accumulating `fft(c_ij) .* fft(X_j)` over j and inverse-transforming once.
///
/// Returns the output batch and the cache (the saved input) consumed by
/// `cdlinear_backward`.
pub fn cdlinear_forward(params: &CirculantStack, x: &Mat) -> Result<(Mat, Mat)> {
    check_batch_dim(x, params.n_in(), "cdlinear_forward")?;
    let b = params.block;
    let spectra = params.coeff_spectra()?;
    let mut y = Mat::zeros(x.rows(), params.n_out());

    let mut fx = vec![vec![Complex::ZERO; b]; params.k_in];
    for n in 0..x.rows() {
        let row = x.row(n);
        for (j, fxj) in fx.iter_mut().enumerate() {
            *fxj = fft_real(&row[j * b..(j + 1) * b])?;
        }
        let out_row = y.row_mut(n);
        for i in 0..params.k_out {
            let mut acc = vec![Complex::ZERO; b];
            for (j, fxj) in fx.iter().enumerate() {
                let fc = &spectra[i * params.k_in + j];
                for k in 0..b {
                    acc[k] += fc[k] * fxj[k];
                }
            }
            let conv = ifft(&acc)?;
            for k in 0..b {
                out_row[i * b + k] = conv[k].re + params.bias[i * b + k];
            }
        }
    }
    Ok((y, x.clone()))
}

/// Backward map of `cdlinear_forward`.
///
/// Per block pair (i, j): the coefficient gradient is the batch sum of the
/// circular cross-correlation of the input block with the upstream gradient
/// block, and the input gradient is the convolution of the upstream gradient
/// with the index-reversed coefficients. Both are evaluated in the frequency
/// domain (the reversal becomes conjugation there); the coefficient gradient
/// accumulates across the batch before its single inverse transform.
pub fn cdlinear_backward(
    params: &CirculantStack,
    cache: &Mat,
    dy: &Mat,
) -> Result<(CirculantGrads, Mat)> {
    check_batch_dim(cache, params.n_in(), "cdlinear_backward cache")?;
    check_batch_dim(dy, params.n_out(), "cdlinear_backward dy")?;
    if cache.rows() != dy.rows() {
        return Err(Error::invalid(format!(
            "cdlinear_backward: batch mismatch {} vs {}",
            cache.rows(),
            dy.rows()
        )));
    }

    let b = params.block;
    let (k_in, k_out) = (params.k_in, params.k_out);
    let spectra = params.coeff_spectra()?;

    let mut grad_freq = vec![vec![Complex::ZERO; b]; k_out * k_in];
    let mut grad_bias = vec![0.0; params.n_out()];
    let mut dx = Mat::zeros(cache.rows(), params.n_in());

    let mut fx = vec![vec![Complex::ZERO; b]; k_in];
    let mut fd = vec![vec![Complex::ZERO; b]; k_out];
    for n in 0..cache.rows() {
        let xrow = cache.row(n);
        let drow = dy.row(n);
        for (j, fxj) in fx.iter_mut().enumerate() {
            *fxj = fft_real(&xrow[j * b..(j + 1) * b])?;
        }
        for (i, fdi) in fd.iter_mut().enumerate() {
            *fdi = fft_real(&drow[i * b..(i + 1) * b])?;
        }
        for (gb, d) in grad_bias.iter_mut().zip(drow) {
            *gb += d;
        }

        for i in 0..k_out {
            for j in 0..k_in {
                let gf = &mut grad_freq[i * k_in + j];
                for k in 0..b {
                    gf[k] += fx[j][k].conj() * fd[i][k];
                }
            }
        }

        let dx_row = dx.row_mut(n);
        for j in 0..k_in {
            let mut acc = vec![Complex::ZERO; b];
            for (i, fdi) in fd.iter().enumerate() {
                let fc = &spectra[i * k_in + j];
                for k in 0..b {
                    // conj(fft(c)) is the spectrum of the reversed coefficients
                    acc[k] += fc[k].conj() * fdi[k];
                }
            }
            let conv = ifft(&acc)?;
            for k in 0..b {
                dx_row[j * b + k] = conv[k].re;
            }
        }
    }

    let mut grad_coeffs = vec![0.0; params.coeffs.len()];
    for (idx, gf) in grad_freq.iter().enumerate() {
        let g = ifft(gf)?;
        for k in 0..b {
            grad_coeffs[idx * b + k] = g[k].re;
        }
    }

    Ok((
        CirculantGrads {
            coeffs: grad_coeffs,
            bias: grad_bias,
        },
        dx,
    ))
}

// ---------------------------------------------------------------------------
// Dense forward / backward
// ---------------------------------------------------------------------------

pub fn dense_forward(params: &DenseParams, x: &Mat) -> Result<(Mat, Mat)> {
    check_batch_dim(x, params.n_in, "dense_forward")?;
    let mut y = Mat::zeros(x.rows(), params.n_out);
    for n in 0..x.rows() {
        let row = x.row(n);
        let out = y.row_mut(n);
        for (o, out_v) in out.iter_mut().enumerate() {
            let w = &params.weight[o * params.n_in..(o + 1) * params.n_in];
            let mut acc = params.bias[o];
            for (wv, xv) in w.iter().zip(row) {
                acc += wv * xv;
            }
            *out_v = acc;
        }
    }
    Ok((y, x.clone()))
}

pub fn dense_backward(params: &DenseParams, cache: &Mat, dy: &Mat) -> Result<(DenseGrads, Mat)> {
    check_batch_dim(cache, params.n_in, "dense_backward cache")?;
    check_batch_dim(dy, params.n_out, "dense_backward dy")?;
    if cache.rows() != dy.rows() {
        return Err(Error::invalid("dense_backward: batch mismatch"));
    }

    let mut grad_w = vec![0.0; params.weight.len()];
    let mut grad_b = vec![0.0; params.n_out];
    let mut dx = Mat::zeros(cache.rows(), params.n_in);

    for n in 0..cache.rows() {
        let xrow = cache.row(n);
        let drow = dy.row(n);
        for (o, &d) in drow.iter().enumerate() {
            grad_b[o] += d;
            let gw = &mut grad_w[o * params.n_in..(o + 1) * params.n_in];
            for (g, xv) in gw.iter_mut().zip(xrow) {
                *g += d * xv;
            }
        }
        let dx_row = dx.row_mut(n);
        for (o, &d) in drow.iter().enumerate() {
            let w = &params.weight[o * params.n_in..(o + 1) * params.n_in];
            for (dxv, wv) in dx_row.iter_mut().zip(w) {
                *dxv += d * wv;
            }
        }
    }

    Ok((
        DenseGrads {
            weight: grad_w,
            bias: grad_b,
        },
        dx,
    ))
}

// ---------------------------------------------------------------------------
// ReLU, loss, slicing
// ---------------------------------------------------------------------------

/// Elementwise max(x, 0); the cache is the pre-activation.
pub fn relu_forward(x: &Mat) -> (Mat, Mat) {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    (y, x.clone())
}

/// Subgradient 0 at exactly 0: gradient passes only where the input was > 0.
pub fn relu_backward(cache: &Mat, dy: &Mat) -> Result<Mat> {
    if cache.rows() != dy.rows() || cache.cols() != dy.cols() {
        return Err(Error::invalid("relu_backward: shape mismatch"));
    }
    let mut dx = dy.clone();
    for (d, &pre) in dx.data_mut().iter_mut().zip(cache.data()) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(dx)
}

/// Batch-mean squared-error loss `mean_n 0.5 * ||y_n - t_n||^2` and its
/// gradient `(y - t) / batch`.
pub fn mse_loss(y: &Mat, t: &Mat) -> Result<(f64, Mat)> {
    if y.rows() != t.rows() || y.cols() != t.cols() {
        return Err(Error::invalid(format!(
            "mse_loss: shape mismatch {}x{} vs {}x{}",
            y.rows(),
            y.cols(),
            t.rows(),
            t.cols()
        )));
    }
    let batch = y.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Mat::zeros(y.rows(), y.cols());
    for ((g, &yv), &tv) in grad.data_mut().iter_mut().zip(y.data()).zip(t.data()) {
        let diff = yv - tv;
        loss += 0.5 * diff * diff;
        *g = diff / batch;
    }
    Ok((loss / batch, grad))
}

/// Keep the first `n_classes` entries of each output row.
pub fn slice_logits(y: &Mat, n_classes: usize) -> Result<Mat> {
    if n_classes > y.cols() {
        return Err(Error::invalid(format!(
            "slice_logits: n_classes {} > n_out {}",
            n_classes,
            y.cols()
        )));
    }
    let mut out = Mat::zeros(y.rows(), n_classes);
    for n in 0..y.rows() {
        out.row_mut(n).copy_from_slice(&y.row(n)[..n_classes]);
    }
    Ok(out)
}

/// Scatter a gradient over sliced logits back into the full output width,
/// zeros in the dropped tail.
pub fn slice_logits_backward(d_logits: &Mat, n_out: usize) -> Result<Mat> {
    if d_logits.cols() > n_out {
        return Err(Error::invalid("slice_logits_backward: n_out too small"));
    }
    let mut out = Mat::zeros(d_logits.rows(), n_out);
    for n in 0..d_logits.rows() {
        out.row_mut(n)[..d_logits.cols()].copy_from_slice(d_logits.row(n));
    }
    Ok(out)
}
