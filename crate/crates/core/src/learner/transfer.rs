//! Two-stage comparison: stage-2 training from Xavier weights versus from
//! stage-1 weights, under identical hyper-parameters and batch orders.

use std::fmt::Write as _;
use std::path::Path;

use super::train::{evaluate_network, train_network, EpochMetrics, InitMode, TrainConfig};
use crate::dataset::{load_labeled_set, LabeledSet, SPLIT_NAMES};
use crate::error::{Error, Result};
use crate::fmt::sig6;

/// Train/val/test sets of one stage.
#[derive(Debug, Clone, Default)]
pub struct StageData {
    pub train: LabeledSet,
    pub val: LabeledSet,
    pub test: LabeledSet,
}

/// Loads `dir/train`, `dir/val` and `dir/test`, dropping post-contact frames.
pub fn load_stage(dir: &Path) -> Result<StageData> {
    let load = |name: &str| load_labeled_set(&dir.join(name), true);
    let [train, val, test] = SPLIT_NAMES;
    Ok(StageData {
        train: load(train)?,
        val: load(val)?,
        test: load(test)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    /// Shared by both stage-2 arms; `init` and `seed` are overridden per arm.
    pub stage2: TrainConfig,
    /// Stage-1 training (run once, shared by every seed).
    pub stage1: TrainConfig,
    pub seeds: Vec<u64>,
    /// Validation-loss threshold; `None` uses the Xavier arm's final-epoch
    /// validation loss for each seed.
    pub threshold: Option<f64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            stage2: TrainConfig::default(),
            stage1: TrainConfig {
                seed: 1000,
                ..TrainConfig::default()
            },
            seeds: (1..=5).collect(),
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    pub metrics: Vec<EpochMetrics>,
    /// First epoch whose validation loss is at or below the threshold.
    pub epochs_to_threshold: Option<usize>,
    pub test_mad_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub threshold: f64,
    pub xavier: ArmResult,
    pub transfer: ArmResult,
}

impl SeedResult {
    pub fn transfer_faster(&self) -> bool {
        match (self.transfer.epochs_to_threshold, self.xavier.epochs_to_threshold) {
            (Some(t), Some(x)) => t < x,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn transfer_mad_not_worse(&self) -> bool {
        self.transfer.test_mad_deg <= self.xavier.test_mad_deg
    }

    /// `(xavier - transfer) / xavier` on the test deviation.
    pub fn relative_improvement(&self) -> f64 {
        (self.xavier.test_mad_deg - self.transfer.test_mad_deg) / self.xavier.test_mad_deg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub stage1_metrics: Vec<EpochMetrics>,
    pub stage1_best_epoch: usize,
    pub seeds: Vec<SeedResult>,
}

impl TransferReport {
    pub fn faster_count(&self) -> usize {
        self.seeds.iter().filter(|s| s.transfer_faster()).count()
    }

    pub fn mad_count(&self) -> usize {
        self.seeds.iter().filter(|s| s.transfer_mad_not_worse()).count()
    }

    pub fn mean_relative_improvement(&self) -> f64 {
        self.seeds.iter().map(|s| s.relative_improvement()).sum::<f64>() / self.seeds.len().max(1) as f64
    }

    /// Plain-text report; identical inputs give identical bytes.
    pub fn to_text(&self) -> String {
        let opt = |e: Option<usize>| e.map_or("never".to_string(), |v| v.to_string());
        let mut out = String::new();
        let _ = writeln!(out, "# stage 1 (best epoch {})", self.stage1_best_epoch);
        let _ = writeln!(out, "epoch,train_loss,val_loss,val_acc");
        for m in &self.stage1_metrics {
            let _ = writeln!(out, "{},{},{},{}", m.epoch, sig6(m.train_loss), sig6(m.val_loss), sig6(m.val_acc));
        }
        let _ = writeln!(out, "\n# stage 2 curves");
        let _ = writeln!(out, "seed,arm,epoch,train_loss,val_loss,val_acc");
        for s in &self.seeds {
            for (arm, r) in [("xavier", &s.xavier), ("transfer", &s.transfer)] {
                for m in &r.metrics {
                    let _ = writeln!(
                        out,
                        "{},{arm},{},{},{},{}",
                        s.seed,
                        m.epoch,
                        sig6(m.train_loss),
                        sig6(m.val_loss),
                        sig6(m.val_acc)
                    );
                }
            }
        }
        let _ = writeln!(out, "\n# summary");
        let _ = writeln!(
            out,
            "seed,threshold,xavier_epochs,transfer_epochs,xavier_mad_deg,transfer_mad_deg,relative_improvement"
        );
        for s in &self.seeds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.seed,
                sig6(s.threshold),
                opt(s.xavier.epochs_to_threshold),
                opt(s.transfer.epochs_to_threshold),
                sig6(s.xavier.test_mad_deg),
                sig6(s.transfer.test_mad_deg),
                sig6(s.relative_improvement())
            );
        }
        let n = self.seeds.len();
        let _ = writeln!(out, "\ntransfer reached threshold first: {}/{n}", self.faster_count());
        let _ = writeln!(out, "transfer test deviation <= xavier: {}/{n}", self.mad_count());
        let _ = writeln!(
            out,
            "mean relative deviation improvement: {}%",
            sig6(100.0 * self.mean_relative_improvement())
        );
        out
    }
}

pub fn epochs_to_threshold(metrics: &[EpochMetrics], threshold: f64) -> Option<usize> {
    metrics.iter().find(|m| m.val_loss <= threshold).map(|m| m.epoch)
}

/// Trains stage 1 once, then for every seed trains stage 2 from Xavier
/// weights and from the best stage-1 weights, with the same seed (and so the
/// same batch order) for both arms.
pub fn transfer_experiment(
    stage1: &StageData,
    stage2: &StageData,
    config: &TransferConfig,
) -> Result<TransferReport> {
    if config.seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let s1 = train_network(&stage1.train, &stage1.val, &config.stage1)?;
    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let arm = |init: InitMode| -> Result<(Vec<EpochMetrics>, f64)> {
            let cfg = TrainConfig {
                seed,
                init,
                ..config.stage2.clone()
            };
            let out = train_network(&stage2.train, &stage2.val, &cfg)?;
            let eval = evaluate_network(&out.final_network, &stage2.test)?;
            Ok((out.metrics, eval.mean_abs_deviation_deg))
        };
        let (xm, x_mad) = arm(InitMode::Xavier)?;
        let (tm, t_mad) = arm(InitMode::FromNetwork(s1.best_network.clone()))?;
        let threshold = config
            .threshold
            .unwrap_or_else(|| xm.last().expect("epoch 0 is always present").val_loss);
        seeds.push(SeedResult {
            seed,
            threshold,
            xavier: ArmResult {
                epochs_to_threshold: epochs_to_threshold(&xm, threshold),
                metrics: xm,
                test_mad_deg: x_mad,
            },
            transfer: ArmResult {
                epochs_to_threshold: epochs_to_threshold(&tm, threshold),
                metrics: tm,
                test_mad_deg: t_mad,
            },
        });
    }
    Ok(TransferReport {
        stage1_metrics: s1.metrics,
        stage1_best_epoch: s1.best_epoch,
        seeds,
    })
}
