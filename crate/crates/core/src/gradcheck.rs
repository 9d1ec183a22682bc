//! Finite-difference verification of every analytic gradient in the crate.
//!
//! Central differences with step 1e-5 in f64, compared at randomly chosen
//! coordinates against the hand-derived backward passes. The relative-error
//! threshold (default 1e-4) and the three default layer configurations are
//! the crate's reference verification protocol; the CLI exposes this
//! machinery as `cdnn grad-check`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::layers::{
    cdlinear_backward, cdlinear_forward, dense_backward, dense_forward, mse_loss, relu_backward,
    relu_forward, slice_logits, slice_logits_backward, CirculantStack, DenseParams,
};
use crate::linalg::Mat;
use crate::regularization::{fisher_trace, fisher_trace_grad, FisherConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub coords_per_target: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            coords_per_target: 20,
            seed: 20_24,
        }
    }
}

/// Layer shapes exercised by default, (n_in, n_out, block).
pub const DEFAULT_SHAPES: [(usize, usize, usize); 3] = [(8, 8, 2), (16, 8, 4), (12, 12, 3)];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckEntry {
    /// What was differentiated, e.g. "cdlinear(16,8,4)/coeffs".
    pub target: String,
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    pub passed: bool,
}

/// Relative error with a floor so that two near-zero values compare equal.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Check one flattened gradient against central differences of `loss_fn`
/// applied to a mutable copy of the parameter buffer.
fn check_buffer(
    target: String,
    buffer: &[f64],
    analytic: &[f64],
    mut loss_fn: impl FnMut(&[f64]) -> Result<f64>,
    cfg: &GradCheckConfig,
    rng: &mut Rng,
) -> Result<GradCheckEntry> {
    let mut work = buffer.to_vec();
    let mut max_rel = 0.0f64;
    let mut worst = 0usize;
    let coords = cfg.coords_per_target.min(buffer.len());
    for c in 0..coords {
        // cover every coordinate when the buffer is small
        let idx = if buffer.len() <= cfg.coords_per_target {
            c
        } else {
            rng.index(buffer.len())
        };
        let orig = work[idx];
        work[idx] = orig + cfg.step;
        let up = loss_fn(&work)?;
        work[idx] = orig - cfg.step;
        let down = loss_fn(&work)?;
        work[idx] = orig;
        let numeric = (up - down) / (2.0 * cfg.step);
        let rel = rel_error(analytic[idx], numeric);
        if rel > max_rel {
            max_rel = rel;
            worst = idx;
        }
    }
    Ok(GradCheckEntry {
        target,
        coords_checked: coords,
        max_rel_error: max_rel,
        worst_coordinate: worst,
        passed: max_rel < cfg.tolerance,
    })
}

fn random_batch(n: usize, dim: usize, rng: &mut Rng) -> Mat {
    let data = (0..n * dim).map(|_| rng.normal()).collect();
    Mat::from_vec(n, dim, data).expect("sized")
}

/// Run the full gradient-check suite over the given layer shapes.
pub fn run_grad_checks(
    shapes: &[(usize, usize, usize)],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut rng = Rng::from_seed(cfg.seed);
    let mut entries = Vec::new();
    let batch = 3;

    for &(n_in, n_out, block) in shapes {
        let tag = format!("({n_in},{n_out},{block})");

        // --- CDLinear: coefficients, bias, input ---
        let mut params = CirculantStack::zeros(n_in, n_out, block)?;
        for c in params.coeffs.iter_mut() {
            *c = rng.normal();
        }
        for b in params.bias.iter_mut() {
            *b = rng.normal_scaled(0.3);
        }
        let x = random_batch(batch, n_in, &mut rng);
        let t = random_batch(batch, n_out, &mut rng);

        let (y, cache) = cdlinear_forward(&params, &x)?;
        let (_, d_y) = mse_loss(&y, &t)?;
        let (grads, dx) = cdlinear_backward(&params, &cache, &d_y)?;

        let p0 = params.clone();
        entries.push(check_buffer(
            format!("cdlinear{tag}/coeffs"),
            &p0.coeffs.clone(),
            &grads.coeffs,
            |buf| {
                let mut p = p0.clone();
                p.coeffs.copy_from_slice(buf);
                let (y, _) = cdlinear_forward(&p, &x)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);
        // the 1/batch factor lives in d_y, so the batch-summed bias gradient
        // is already d(mean loss)/d(bias)
        entries.push(check_buffer(
            format!("cdlinear{tag}/bias"),
            &p0.bias.clone(),
            &grads.bias,
            |buf| {
                let mut p = p0.clone();
                p.bias.copy_from_slice(buf);
                let (y, _) = cdlinear_forward(&p, &x)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);
        entries.push(check_buffer(
            format!("cdlinear{tag}/input"),
            x.data(),
            dx.data(),
            |buf| {
                let xm = Mat::from_vec(batch, n_in, buf.to_vec())?;
                let (y, _) = cdlinear_forward(&p0, &xm)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);

        // --- Dense: weight, bias, input ---
        let mut dparams = DenseParams::zeros(n_in, n_out);
        for w in dparams.weight.iter_mut() {
            *w = rng.normal();
        }
        for b in dparams.bias.iter_mut() {
            *b = rng.normal_scaled(0.3);
        }
        let (y, cache) = dense_forward(&dparams, &x)?;
        let (_, d_y) = mse_loss(&y, &t)?;
        let (dgrads, ddx) = dense_backward(&dparams, &cache, &d_y)?;
        let d0 = dparams.clone();
        entries.push(check_buffer(
            format!("dense{tag}/weight"),
            &d0.weight.clone(),
            &dgrads.weight,
            |buf| {
                let mut p = d0.clone();
                p.weight.copy_from_slice(buf);
                let (y, _) = dense_forward(&p, &x)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);
        entries.push(check_buffer(
            format!("dense{tag}/bias"),
            &d0.bias.clone(),
            &dgrads.bias,
            |buf| {
                let mut p = d0.clone();
                p.bias.copy_from_slice(buf);
                let (y, _) = dense_forward(&p, &x)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);
        entries.push(check_buffer(
            format!("dense{tag}/input"),
            x.data(),
            ddx.data(),
            |buf| {
                let xm = Mat::from_vec(batch, n_in, buf.to_vec())?;
                let (y, _) = dense_forward(&d0, &xm)?;
                Ok(mse_loss(&y, &t)?.0)
            },
            cfg,
            &mut rng,
        )?);

        // --- ReLU (inputs kept away from the kink) ---
        let mut xr = random_batch(batch, n_in, &mut rng);
        for v in xr.data_mut() {
            if v.abs() < 0.1 {
                *v += 0.1 * v.signum();
            }
        }
        let tr = random_batch(batch, n_in, &mut rng);
        let (yr, rcache) = relu_forward(&xr);
        let (_, d_yr) = mse_loss(&yr, &tr)?;
        let rdx = relu_backward(&rcache, &d_yr)?;
        entries.push(check_buffer(
            format!("relu{tag}/input"),
            xr.data(),
            rdx.data(),
            |buf| {
                let xm = Mat::from_vec(batch, n_in, buf.to_vec())?;
                let (y, _) = relu_forward(&xm);
                Ok(mse_loss(&y, &tr)?.0)
            },
            cfg,
            &mut rng,
        )?);

        // --- MSE itself ---
        let yl = random_batch(batch, n_out, &mut rng);
        let tl = random_batch(batch, n_out, &mut rng);
        let (_, d_yl) = mse_loss(&yl, &tl)?;
        entries.push(check_buffer(
            format!("mse{tag}/prediction"),
            yl.data(),
            d_yl.data(),
            |buf| {
                let ym = Mat::from_vec(batch, n_out, buf.to_vec())?;
                Ok(mse_loss(&ym, &tl)?.0)
            },
            cfg,
            &mut rng,
        )?);

        // --- logit slicing composed with the loss ---
        if n_out > 2 {
            let keep = n_out - 1;
            let ys = random_batch(batch, n_out, &mut rng);
            let ts = random_batch(batch, keep, &mut rng);
            let sliced = slice_logits(&ys, keep)?;
            let (_, d_sliced) = mse_loss(&sliced, &ts)?;
            let d_full = slice_logits_backward(&d_sliced, n_out)?;
            entries.push(check_buffer(
                format!("slice{tag}/input"),
                ys.data(),
                d_full.data(),
                |buf| {
                    let ym = Mat::from_vec(batch, n_out, buf.to_vec())?;
                    let s = slice_logits(&ym, keep)?;
                    Ok(mse_loss(&s, &ts)?.0)
                },
                cfg,
                &mut rng,
            )?);
        }

        // --- Fisher trace ---
        let fisher_cfg = FisherConfig::default();
        let mut fp = CirculantStack::zeros(n_in, n_out, block)?;
        for c in fp.coeffs.iter_mut() {
            *c = rng.normal();
        }
        let fgrad = fisher_trace_grad(&fp, &fisher_cfg)?;
        let f0 = fp.clone();
        entries.push(check_buffer(
            format!("fisher{tag}/coeffs"),
            &f0.coeffs.clone(),
            &fgrad,
            |buf| {
                let mut p = f0.clone();
                p.coeffs.copy_from_slice(buf);
                fisher_trace(&p, &fisher_cfg)
            },
            cfg,
            &mut rng,
        )?);
    }

    let passed = entries.iter().all(|e| e.passed);
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        entries,
        passed,
    })
}

impl GradCheckReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} {:<24} max rel err {:.3e} over {} coords{}\n",
                if e.passed { "PASS" } else { "FAIL" },
                e.target,
                e.max_rel_error,
                e.coords_checked,
                if e.passed {
                    String::new()
                } else {
                    format!(" (worst at coordinate {})", e.worst_coordinate)
                }
            ));
        }
        out.push_str(&format!(
            "{}: {} checks at tolerance {:.1e}\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.entries.len(),
            self.tolerance
        ));
        out
    }
}
