//! SGD-with-momentum training loop, per-seed runs, and the three-model
//! experiment driver.
//!
//! Reference protocol: 25 epochs of SGD + classical momentum (lr 0.1,
//! momentum 0.9), batch size 64, MSE against one-hot targets, three seeds
//! {0, 1, 2}. Runs are bit-deterministic given (spec, data, config, seed):
//! weight init, batch shuffling, and dropout masks each draw from their own
//! seeded stream.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::model_condition_number;
use crate::error::{Error, Result};
use crate::layers::{self, mse_loss, slice_logits, slice_logits_backward, LayerSpec, NetworkSpec};
use crate::linalg::Mat;
use crate::network::{InitConfig, LayerGrads, LayerParams, Network};
use crate::regularization::{fisher_trace, fisher_trace_grad, FisherConfig, ShannonDropoutConfig};
use crate::rng::{streams, Rng};

pub const N_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub dropout: ShannonDropoutConfig,
    pub fisher: FisherConfig,
    pub fisher_enabled: bool,
    pub loss: LossKind,
    pub init: InitConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 64,
            epochs: 25,
            seeds: vec![0, 1, 2],
            dropout: ShannonDropoutConfig::disabled(),
            fisher: FisherConfig::default(),
            fisher_enabled: false,
            loss: LossKind::Mse,
            init: InitConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size and epochs must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed required"));
        }
        self.dropout.validate()?;
        self.fisher.validate()
    }
}

/// Momentum buffers, one entry per layer mirroring the parameter shapes.
#[derive(Debug, Clone)]
pub struct Velocity {
    layers: Vec<LayerGrads>,
}

impl Velocity {
    pub fn zeros_like(net: &Network) -> Velocity {
        let layers = net
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Dense(d) => LayerGrads::Dense(crate::layers::DenseGrads {
                    weight: vec![0.0; d.weight.len()],
                    bias: vec![0.0; d.bias.len()],
                }),
                LayerParams::CdLinear(c) => LayerGrads::CdLinear(crate::layers::CirculantGrads {
                    coeffs: vec![0.0; c.coeffs.len()],
                    bias: vec![0.0; c.bias.len()],
                }),
                LayerParams::Relu { .. } => LayerGrads::Relu,
            })
            .collect();
        Velocity { layers }
    }
}

fn step_buffer(params: &mut [f64], grads: &[f64], vel: &mut [f64], lr: f64, beta: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != vel.len() {
        return Err(Error::invalid("sgd step: shape mismatch"));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
        *v = beta * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Classical (heavy-ball) momentum update: `v <- beta v + g; theta <- theta - lr v`.
pub fn sgd_momentum_step(
    net: &mut Network,
    grads: &[LayerGrads],
    velocity: &mut Velocity,
    lr: f64,
    beta: f64,
) -> Result<()> {
    if grads.len() != net.params.len() || velocity.layers.len() != net.params.len() {
        return Err(Error::invalid("sgd step: layer count mismatch"));
    }
    for ((p, g), v) in net
        .params
        .iter_mut()
        .zip(grads)
        .zip(velocity.layers.iter_mut())
    {
        match (p, g, v) {
            (LayerParams::Dense(d), LayerGrads::Dense(dg), LayerGrads::Dense(dv)) => {
                step_buffer(&mut d.weight, &dg.weight, &mut dv.weight, lr, beta)?;
                step_buffer(&mut d.bias, &dg.bias, &mut dv.bias, lr, beta)?;
            }
            (LayerParams::CdLinear(c), LayerGrads::CdLinear(cg), LayerGrads::CdLinear(cv)) => {
                step_buffer(&mut c.coeffs, &cg.coeffs, &mut cv.coeffs, lr, beta)?;
                step_buffer(&mut c.bias, &cg.bias, &mut cv.bias, lr, beta)?;
            }
            (LayerParams::Relu { .. }, LayerGrads::Relu, LayerGrads::Relu) => {}
            _ => return Err(Error::invalid("sgd step: layer kind mismatch")),
        }
    }
    Ok(())
}

/// Result of one training run. `wall_clock_seconds` is excluded from the
/// determinism contract (see `to_json_deterministic`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub seed: u64,
    pub param_count: usize,
    pub train_loss: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub final_train_loss: f64,
    pub final_test_accuracy: f64,
    /// Per weight layer; `None` marks a degenerate (infinite) measurement.
    pub layer_kappas: Vec<Option<f64>>,
    pub mean_kappa: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-clock field zeroed; two runs with the same config
    /// and seed must agree on this string byte-for-byte.
    pub fn to_json_deterministic(&self) -> Result<String> {
        let mut clone = self.clone();
        clone.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string_pretty(&clone)?)
    }
}

fn one_hot(labels: &[u8], n_classes: usize) -> Mat {
    let mut t = Mat::zeros(labels.len(), n_classes);
    for (n, &l) in labels.iter().enumerate() {
        t.set(n, l as usize, 1.0);
    }
    t
}

/// Argmax with ties broken toward the lowest class index.
fn predict_class(logits: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = logits[0];
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn accuracy(net: &Network, features: &Mat, labels: &[u8]) -> Result<f64> {
    let out = net.forward_eval(features)?;
    let logits = slice_logits(&out, N_CLASSES)?;
    let correct = (0..logits.rows())
        .filter(|&n| predict_class(logits.row(n)) == labels[n] as usize)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Extract a row subset as a batch.
fn gather(features: &Mat, targets: &Mat, idx: &[usize]) -> (Mat, Mat) {
    let mut x = Mat::zeros(idx.len(), features.cols());
    let mut t = Mat::zeros(idx.len(), targets.cols());
    for (row, &i) in idx.iter().enumerate() {
        x.row_mut(row).copy_from_slice(features.row(i));
        t.row_mut(row).copy_from_slice(targets.row(i));
    }
    (x, t)
}

/// Add the Fisher-trace penalty gradient for every circulant layer; returns
/// the penalty value added to the objective.
fn apply_fisher(
    net: &Network,
    grads: &mut [LayerGrads],
    cfg: &FisherConfig,
) -> Result<f64> {
    let mut penalty = 0.0;
    for (p, g) in net.params.iter().zip(grads.iter_mut()) {
        if let (LayerParams::CdLinear(c), LayerGrads::CdLinear(cg)) = (p, g) {
            penalty += cfg.strength * fisher_trace(c, cfg)?;
            let fg = fisher_trace_grad(c, cfg)?;
            for (gv, fv) in cg.coeffs.iter_mut().zip(&fg) {
                *gv += cfg.strength * fv;
            }
        }
    }
    Ok(penalty)
}

/// Train one model on a prepared (already normalized) split.
///
/// Deterministic in (spec, data, cfg, seed). The logged per-epoch loss is
/// the sample-weighted mean MSE over the epoch's batches; the Fisher penalty,
/// when enabled, enters the gradients but not this log. The final condition
/// number is measured on the full training set at the last epoch's weights.
pub fn train_model(
    spec: &NetworkSpec,
    data: &crate::data::SplitDataset,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<(RunResult, Network)> {
    cfg.validate()?;
    spec.validate()?;
    if data.train.features.cols() != spec.n_in() {
        return Err(Error::invalid("data dim does not match network input"));
    }
    if spec.n_out() < N_CLASSES {
        return Err(Error::invalid(format!(
            "network must emit at least {N_CLASSES} outputs"
        )));
    }

    let started = Instant::now();
    let mut init_rng = Rng::from_seed_stream(seed, streams::WEIGHT_INIT);
    let mut shuffle_rng = Rng::from_seed_stream(seed, streams::BATCH_SHUFFLE);
    let mut dropout_rng =
        Rng::from_seed_stream(seed.wrapping_add(cfg.dropout.rng_seed), streams::DROPOUT);

    let mut net = Network::init(spec, &mut init_rng, &cfg.init)?;
    let mut velocity = Velocity::zeros_like(&net);
    let targets = one_hot(&data.train.labels, N_CLASSES);
    let n_train = data.train.len();

    let mut train_loss = Vec::with_capacity(cfg.epochs);
    let mut test_accuracy = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let order = shuffle_rng.permutation(n_train);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, t) = gather(&data.train.features, &targets, chunk);
            let (out, cache) = net.forward_train(&x, &cfg.dropout, &mut dropout_rng)?;
            let logits = slice_logits(&out, N_CLASSES)?;
            let (loss, d_logits) = mse_loss(&logits, &t)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch loss = {loss}"),
                });
            }
            epoch_loss += loss * chunk.len() as f64;

            let d_out = slice_logits_backward(&d_logits, net.n_out())?;
            let mut grads = net.backward(&cache, &d_out)?;
            if cfg.fisher_enabled {
                apply_fisher(&net, &mut grads, &cfg.fisher)?;
            }
            sgd_momentum_step(&mut net, &grads, &mut velocity, cfg.learning_rate, cfg.momentum)?;
        }
        let epoch_loss = epoch_loss / n_train as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("epoch loss = {epoch_loss}"),
            });
        }
        train_loss.push(epoch_loss);
        test_accuracy.push(accuracy(&net, &data.test.features, &data.test.labels)?);
    }

    let spectrum = model_condition_number(&net, &data.train.features)?;
    let layer_kappas: Vec<Option<f64>> = spectrum.layers.iter().map(|l| l.kappa).collect();

    let result = RunResult {
        model: spec.name.clone(),
        seed,
        param_count: net.param_count(),
        final_train_loss: *train_loss.last().unwrap(),
        final_test_accuracy: *test_accuracy.last().unwrap(),
        train_loss,
        test_accuracy,
        layer_kappas,
        mean_kappa: spectrum.mean_kappa,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((result, net))
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

/// The three reference architectures.
pub fn table_architectures() -> Vec<NetworkSpec> {
    vec![
        NetworkSpec::new(
            "dense",
            vec![
                LayerSpec::Dense { n_in: 64, n_out: 64 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::Dense { n_in: 64, n_out: 64 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::Dense { n_in: 64, n_out: 10 },
            ],
        )
        .expect("static spec"),
        NetworkSpec::new(
            "cd-b4",
            vec![
                LayerSpec::CdLinear { n_in: 64, n_out: 64, block: 4 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::CdLinear { n_in: 64, n_out: 64, block: 4 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::CdLinear { n_in: 64, n_out: 12, block: 4 },
            ],
        )
        .expect("static spec"),
        NetworkSpec::new(
            "cd-b8",
            vec![
                LayerSpec::CdLinear { n_in: 64, n_out: 64, block: 8 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::CdLinear { n_in: 64, n_out: 64, block: 8 },
                LayerSpec::Relu { dim: 64 },
                LayerSpec::CdLinear { n_in: 64, n_out: 16, block: 8 },
            ],
        )
        .expect("static spec"),
    ]
}

pub fn architecture_by_name(name: &str) -> Result<NetworkSpec> {
    table_architectures()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::invalid(format!("unknown model {name:?}; use dense, cd-b4, cd-b8")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub param_count: usize,
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    /// Mean over seeds of the per-run mean kappa; `None` if any run was
    /// degenerate.
    pub mean_kappa: Option<f64>,
    pub runs: Vec<RunResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub models: Vec<ModelSummary>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trained parameters per run, keyed by (model name, seed).
pub type TrainedNetworks = Vec<(String, u64, Network)>;

/// Train every reference architecture on every seed and aggregate.
pub fn run_experiment(
    data: &crate::data::SplitDataset,
    cfg: &TrainingConfig,
) -> Result<(ExperimentSummary, TrainedNetworks)> {
    cfg.validate()?;
    let mut models = Vec::new();
    let mut networks = Vec::new();
    for spec in table_architectures() {
        let mut runs = Vec::new();
        for &seed in &cfg.seeds {
            let (run, net) = train_model(&spec, data, cfg, seed)?;
            networks.push((spec.name.clone(), seed, net));
            runs.push(run);
        }
        let losses: Vec<f64> = runs.iter().map(|r| r.final_train_loss).collect();
        let accs: Vec<f64> = runs.iter().map(|r| r.final_test_accuracy).collect();
        let (loss_mean, loss_std) = mean_std(&losses);
        let (acc_mean, acc_std) = mean_std(&accs);
        let mean_kappa = runs
            .iter()
            .map(|r| r.mean_kappa)
            .try_fold(0.0, |acc, k| k.map(|k| acc + k))
            .map(|sum| sum / runs.len() as f64);
        models.push(ModelSummary {
            model: spec.name.clone(),
            param_count: layers::param_count(&spec),
            final_loss_mean: loss_mean,
            final_loss_std: loss_std,
            accuracy_mean: acc_mean,
            accuracy_std: acc_std,
            mean_kappa,
            runs,
        });
    }
    Ok((ExperimentSummary { models }, networks))
}

impl ExperimentSummary {
    /// Fixed-width text table with the reference columns.
    pub fn table_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>10} {:>22} {:>20} {:>12}\n",
            "Model", "Parameters", "Final training loss", "Test accuracy", "Hessian k"
        ));
        for m in &self.models {
            let kappa = match m.mean_kappa {
                Some(k) => format!("{k:.3e}"),
                None => "inf".to_string(),
            };
            out.push_str(&format!(
                "{:<12} {:>10} {:>12.4} ± {:<7.4} {:>11.2}% ± {:<5.2} {:>12}\n",
                m.model,
                m.param_count,
                m.final_loss_mean,
                m.final_loss_std,
                100.0 * m.accuracy_mean,
                100.0 * m.accuracy_std,
                kappa
            ));
        }
        out
    }

    /// Per-epoch CSV (`epoch,train_loss,test_accuracy`) for one run.
    pub fn curves_csv(run: &RunResult) -> String {
        let mut out = String::from("epoch,train_loss,test_accuracy\n");
        for (e, (l, a)) in run.train_loss.iter().zip(&run.test_accuracy).enumerate() {
            out.push_str(&format!("{e},{l},{a}\n"));
        }
        out
    }
}
