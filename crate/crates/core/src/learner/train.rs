//! Mini-batch SGD training and evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::network::{xavier_init, ForwardPass, Network, NetworkSpec, STEERING_SCALE_DEG};
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::fmt::sig6;
use crate::render::Image;
use crate::rng::derive_stream;

/// Images per forward pass when only predictions are needed.
const PREDICT_CHUNK: usize = 64;
pub const DEFAULT_ACCURACY_TOLERANCE_DEG: f64 = 1.5;
pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,val_acc";
pub const DEVIATIONS_HEADER: &str = "image_path,label_deg,pred_deg,abs_dev_deg";

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    Xavier,
    FromCheckpoint(PathBuf),
    /// Start from weights already in memory.
    FromNetwork(Network<f32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub init: InitMode,
    /// Band used for the validation accuracy metric.
    pub accuracy_tolerance_deg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            init: InitMode::Xavier,
            accuracy_tolerance_deg: DEFAULT_ACCURACY_TOLERANCE_DEG,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.accuracy_tolerance_deg > 0.0) {
            return Err(Error::Config("accuracy tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_network: Network<f32>,
    pub best_network: Network<f32>,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            m.epoch,
            sig6(m.train_loss),
            sig6(m.val_loss),
            sig6(m.val_acc)
        );
    }
    out
}

fn normalized(labels_deg: &[f64]) -> Vec<f64> {
    labels_deg.iter().map(|d| d / STEERING_SCALE_DEG).collect()
}

/// Normalized predictions for every image, in chunks.
pub fn predict_all(net: &Network<f32>, pass: &mut ForwardPass<f32>, images: &[Image]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(PREDICT_CHUNK) {
        let refs: Vec<&Image> = chunk.iter().collect();
        out.extend(net.predict_with(pass, &refs)?);
    }
    Ok(out)
}

/// Mean squared error on normalized labels and the tolerance-band accuracy.
fn score(predictions: &[f64], labels_deg: &[f64], tolerance_deg: f64) -> (f64, f64) {
    let n = labels_deg.len() as f64;
    let mut sq = 0.0;
    let mut hits = 0usize;
    for (p, y) in predictions.iter().zip(labels_deg) {
        let e = p - y / STEERING_SCALE_DEG;
        sq += e * e;
        hits += ((e * STEERING_SCALE_DEG).abs() <= tolerance_deg) as usize;
    }
    (sq / n, hits as f64 / n)
}

fn initial_network(config: &TrainConfig, spec: &NetworkSpec) -> Result<Network<f32>> {
    match &config.init {
        InitMode::Xavier => xavier_init(spec, &mut derive_stream(config.seed, 0)),
        InitMode::FromCheckpoint(path) => load_checkpoint(path, spec),
        InitMode::FromNetwork(net) => {
            if net.spec().hash() != spec.hash() {
                return Err(Error::ChecksumMismatch {
                    expected: spec.hash(),
                    found: net.spec().hash(),
                });
            }
            Ok(net.clone())
        }
    }
}

/// Trains the standard network. Epoch `e >= 1` visits the training set in an
/// order shuffled by `derive_stream(seed, e)`; Xavier weights come from
/// `derive_stream(seed, 0)`. Validation metrics follow every epoch, and
/// epoch 0 scores the initial weights.
pub fn train_network(train: &LabeledSet, val: &LabeledSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let spec = NetworkSpec::standard();
    let mut net = initial_network(config, &spec)?;
    let train_labels = normalized(&train.steering_deg);
    let tol = config.accuracy_tolerance_deg;
    let mut pass = ForwardPass::new();

    let evaluate = |net: &Network<f32>, pass: &mut ForwardPass<f32>, set: &LabeledSet| {
        predict_all(net, pass, &set.images).map(|p| score(&p, &set.steering_deg, tol))
    };
    let (train_loss0, _) = evaluate(&net, &mut pass, train)?;
    let (val_loss0, val_acc0) = evaluate(&net, &mut pass, val)?;
    let mut metrics = vec![EpochMetrics {
        epoch: 0,
        train_loss: train_loss0,
        val_loss: val_loss0,
        val_acc: val_acc0,
    }];
    let mut best = (0, val_loss0, net.clone());

    let mut grads = net.zero_gradients();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        derive_stream(config.seed, epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let images: Vec<&Image> = idx.iter().map(|&i| &train.images[i]).collect();
            let labels: Vec<f64> = idx.iter().map(|&i| train_labels[i]).collect();
            net.forward_images(&mut pass, &images)?;
            let loss = net.backward_into(&mut pass, &labels, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * idx.len() as f64;
            net.sgd_step(&grads, config.learning_rate);
        }
        let (val_loss, val_acc) = evaluate(&net, &mut pass, val)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_acc,
        });
        if val_loss < best.1 {
            best = (epoch, val_loss, net.clone());
        }
    }
    Ok(TrainOutcome {
        final_network: net,
        best_network: best.2,
        best_epoch: best.0,
        metrics,
    })
}

/// `model.cfw` with tag `best` becomes `model.best.cfw`.
pub fn sibling_path(path: &Path, tag: &str, extension: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.{extension}"))
}

/// Trains and writes the final checkpoint to `out`, the best-validation
/// checkpoint next to it (`<stem>.best.cfw`) and the metrics
/// (`<stem>.metrics.csv`).
pub fn train_to_files(train: &LabeledSet, val: &LabeledSet, config: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    let outcome = train_network(train, val, config)?;
    save_checkpoint(out, &outcome.final_network)?;
    save_checkpoint(&sibling_path(out, "best", "cfw"), &outcome.best_network)?;
    let metrics_path = sibling_path(out, "metrics", "csv");
    std::fs::write(&metrics_path, metrics_csv(&outcome.metrics)).map_err(|e| Error::io(&metrics_path, e))?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_abs_deviation_deg: f64,
    pub predictions_deg: Vec<f64>,
    pub deviations_deg: Vec<f64>,
}

/// Per-frame absolute deviation `|30 (pred - label / 30)|` in degrees.
pub fn evaluate_predictions(predictions: &[f64], labels_deg: &[f64]) -> Result<Evaluation> {
    if labels_deg.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let deviations_deg: Vec<f64> = predictions
        .iter()
        .zip(labels_deg)
        .map(|(p, y)| (STEERING_SCALE_DEG * (p - y / STEERING_SCALE_DEG)).abs())
        .collect();
    Ok(Evaluation {
        mean_abs_deviation_deg: deviations_deg.iter().sum::<f64>() / deviations_deg.len() as f64,
        predictions_deg: predictions.iter().map(|p| p * STEERING_SCALE_DEG).collect(),
        deviations_deg,
    })
}

pub fn evaluate_network(net: &Network<f32>, test: &LabeledSet) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let predictions = predict_all(net, &mut ForwardPass::new(), &test.images)?;
    evaluate_predictions(&predictions, &test.steering_deg)
}

pub fn deviations_csv(test: &LabeledSet, eval: &Evaluation) -> String {
    let mut out = format!("{DEVIATIONS_HEADER}\n");
    for i in 0..test.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            test.image_paths[i],
            sig6(test.steering_deg[i]),
            sig6(eval.predictions_deg[i]),
            sig6(eval.deviations_deg[i])
        );
    }
    out
}
