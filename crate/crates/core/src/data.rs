//! Digits dataset ingestion, deterministic splitting, normalization,
//! spectral whitening, and synthetic-signal generators.
//!
//! The canonical data file is `data/digits.csv`: 1797 rows, each 64
//! comma-separated pixel intensities in [0, 16] followed by an integer label
//! in [0, 9], no header. `scripts/fetch_digits.py` regenerates it and
//! documents provenance.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{streams, Rng};
use crate::spectral::{fft_real, ifft, Complex};

pub const FEATURE_DIM: usize = 64;
pub const CANONICAL_SIZE: usize = 1797;
pub const TRAIN_SIZE: usize = 1437;
pub const RAW_MAX: f64 = 16.0;

/// Feature matrix (one sample per row) plus labels.
#[derive(Debug, Clone)]
pub struct DigitsDataset {
    pub features: Mat,
    pub labels: Vec<u8>,
}

impl DigitsDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn select(&self, idx: &[usize]) -> DigitsDataset {
        let mut features = Mat::zeros(idx.len(), self.features.cols());
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            features.row_mut(row).copy_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        DigitsDataset { features, labels }
    }
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: DigitsDataset,
    pub test: DigitsDataset,
}

/// Parse the CSV format described in the module docs. Malformed rows are
/// reported with their 1-based line number.
pub fn load_digits_csv(path: &Path) -> Result<DigitsDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_1 = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != FEATURE_DIM + 1 {
            return Err(Error::Parse {
                line: line_1,
                message: format!("expected {} fields, found {}", FEATURE_DIM + 1, fields.len()),
            });
        }
        let mut feat = Vec::with_capacity(FEATURE_DIM);
        for f in &fields[..FEATURE_DIM] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                line: line_1,
                message: format!("bad feature value {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_1,
                    message: "non-finite feature".into(),
                });
            }
            feat.push(v);
        }
        let label: i64 = fields[FEATURE_DIM].trim().parse().map_err(|_| Error::Parse {
            line: line_1,
            message: format!("bad label {:?}", fields[FEATURE_DIM]),
        })?;
        if !(0..=9).contains(&label) {
            return Err(Error::Parse {
                line: line_1,
                message: format!("label {label} out of range 0..=9"),
            });
        }
        rows.push(feat);
        labels.push(label as u8);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "file contains no samples".into(),
        });
    }
    Ok(DigitsDataset {
        features: Mat::from_rows(&rows)?,
        labels,
    })
}

/// Seeded shuffle-split: the first `train_n` of a permutation go to train,
/// the rest to test.
pub fn split_deterministic(ds: &DigitsDataset, train_n: usize, seed: u64) -> Result<SplitDataset> {
    if train_n >= ds.len() {
        return Err(Error::invalid(format!(
            "train_n {} must be < dataset size {}",
            train_n,
            ds.len()
        )));
    }
    let mut rng = Rng::from_seed_stream(seed, streams::DATA_SPLIT);
    let perm = rng.permutation(ds.len());
    Ok(SplitDataset {
        train: ds.select(&perm[..train_n]),
        test: ds.select(&perm[train_n..]),
    })
}

/// Scale raw pixel intensities [0, 16] into [0, 1]. Apply exactly once.
pub fn normalize(features: &Mat) -> Mat {
    let mut out = features.clone();
    for v in out.data_mut() {
        *v /= RAW_MAX;
    }
    out
}

/// Guard floor for zero-variance frequencies during whitening.
pub const WHITEN_VAR_FLOOR: f64 = 1e-12;

/// Rescale each per-block DFT coefficient so its variance across the batch
/// is 1, then transform back to real signals. Returns the whitened batch and
/// the list of (block, frequency) pairs that hit the variance floor.
pub fn spectral_whiten(batch: &Mat, block: usize) -> Result<(Mat, Vec<(usize, usize)>)> {
    if block == 0 || !batch.cols().is_multiple_of(block) {
        return Err(Error::invalid(format!(
            "dim {} not divisible by block {block}",
            batch.cols()
        )));
    }
    if batch.rows() < 2 {
        return Err(Error::invalid("whitening needs a batch of at least 2"));
    }
    let n = batch.rows();
    let k_in = batch.cols() / block;

    // forward transform everything
    let mut spectra: Vec<Vec<Complex>> = Vec::with_capacity(n * k_in);
    for r in 0..n {
        let row = batch.row(r);
        for j in 0..k_in {
            spectra.push(fft_real(&row[j * block..(j + 1) * block])?);
        }
    }

    // per (block, frequency): complex mean, then variance of |F - mean|^2
    let mut floored = Vec::new();
    #[allow(clippy::needless_range_loop)]
    for j in 0..k_in {
        for k in 0..block {
            let mut mean = Complex::ZERO;
            for r in 0..n {
                mean += spectra[r * k_in + j][k];
            }
            mean = mean.scale(1.0 / n as f64);
            let mut var = 0.0;
            for r in 0..n {
                var += (spectra[r * k_in + j][k] - mean).abs_sq();
            }
            var /= n as f64;
            let var = if var < WHITEN_VAR_FLOOR {
                floored.push((j, k));
                WHITEN_VAR_FLOOR
            } else {
                var
            };
            let inv_sd = 1.0 / var.sqrt();
            for r in 0..n {
                let v = &mut spectra[r * k_in + j][k];
                *v = v.scale(inv_sd);
            }
        }
    }

    // back to signal space; conjugate symmetry is preserved because
    // var(F(k)) == var(F(B-k)) exactly for real input, so outputs are real
    let mut out = Mat::zeros(n, batch.cols());
    for r in 0..n {
        let row = out.row_mut(r);
        for j in 0..k_in {
            let sig = ifft(&spectra[r * k_in + j])?;
            for k in 0..block {
                row[j * block + k] = sig[k].re;
            }
        }
    }
    Ok((out, floored))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Unit-magnitude random-phase spectrum per block: every sample has an
    /// exactly flat power spectrum.
    FlatSpectrum,
}

/// Deterministic synthetic batches for the theorem checks.
pub fn gen_synthetic(
    kind: SyntheticKind,
    n: usize,
    dim: usize,
    block: usize,
    seed: u64,
) -> Result<Mat> {
    if block == 0 || !dim.is_multiple_of(block) {
        return Err(Error::invalid(format!(
            "dim {dim} not divisible by block {block}"
        )));
    }
    let mut rng = Rng::from_seed_stream(seed, streams::SYNTHETIC);
    let mut out = Mat::zeros(n, dim);
    match kind {
        SyntheticKind::Gaussian => {
            for v in out.data_mut() {
                *v = rng.normal();
            }
        }
        SyntheticKind::FlatSpectrum => {
            let k_in = dim / block;
            for r in 0..n {
                let row = out.row_mut(r);
                for j in 0..k_in {
                    let mut spec = vec![Complex::ZERO; block];
                    // random sign at DC, random phases elsewhere, Hermitian
                    // symmetric so the signal is real
                    spec[0] = Complex::from_re(if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
                    let half = block / 2;
                    for k in 1..block {
                        if k < block - k {
                            let theta = 2.0 * std::f64::consts::PI * rng.uniform();
                            spec[k] = Complex::cis(theta);
                            spec[block - k] = spec[k].conj();
                        } else if k == half && block.is_multiple_of(2) {
                            spec[k] =
                                Complex::from_re(if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
                        }
                    }
                    let sig = ifft(&spec)?;
                    for k in 0..block {
                        row[j * block + k] = sig[k].re;
                    }
                }
            }
        }
    }
    Ok(out)
}
