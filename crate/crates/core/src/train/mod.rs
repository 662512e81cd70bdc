//! Per-video optimization over k random 80/20 splits, keeping the epoch with
//! the lowest validation loss.

mod cv;
mod optim;
mod runner;

pub use cv::{cross_validate, evaluate_model, split_records, CrossValSummary, SplitResult};
pub use optim::AdamW;
pub use runner::{predict_logits, predict_scores, train_one_split, EpochStats, PreparedVideo, TrainOutcome};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::VideoRecord;
use crate::error::{Error, Result};
use crate::gnn::ModelConfig;
use crate::metrics::DatasetKind;
use crate::summarize::{make_summary, SummaryConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Cross-entropy against the ground-truth keyshot summary mask.
    #[default]
    Binary,
    /// Squared error against min-max scaled importance scores.
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
    pub model: ModelConfig,
    pub summary: SummaryConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_dataset(DatasetKind::Tvsum)
    }
}

impl TrainConfig {
    /// Published learning rate, weight decay, epoch budget and graph window
    /// per benchmark.
    pub fn for_dataset(kind: DatasetKind) -> Self {
        let (learning_rate, weight_decay, epochs, window) = match kind {
            DatasetKind::Summe => (0.001, 0.003, 40, 20),
            DatasetKind::Tvsum => (0.002, 0.0001, 50, 10),
        };
        TrainConfig {
            learning_rate,
            weight_decay,
            epochs,
            loss_mode: LossMode::Binary,
            seed: 0,
            model: ModelConfig {
                window,
                ..ModelConfig::default()
            },
            summary: SummaryConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.summary.budget_fraction) {
            return Err(Error::config("budget_fraction", "must lie in [0, 1]"));
        }
        self.model.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_video_ids: Vec<String>,
    pub val_video_ids: Vec<String>,
}

/// `k` independent random partitions with `round(0.2 n)` validation videos
/// each. Ids keep their dataset order inside each side.
pub fn make_splits(video_ids: &[String], k: usize, seed: u64) -> Result<Vec<Split>> {
    let n = video_ids.len();
    if n < 5 {
        return Err(Error::Contract(format!("need at least 5 videos to split, got {n}")));
    }
    if k == 0 {
        return Err(Error::Contract("need at least one split".into()));
    }
    let n_val = (0.2 * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Vec::with_capacity(k);
    for _ in 0..k {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut is_val = vec![false; n];
        order[..n_val].iter().for_each(|&i| is_val[i] = true);
        let pick = |want: bool| {
            (0..n)
                .filter(|&i| is_val[i] == want)
                .map(|i| video_ids[i].clone())
                .collect()
        };
        splits.push(Split {
            train_video_ids: pick(false),
            val_video_ids: pick(true),
        });
    }
    Ok(splits)
}

/// Per-sampled-frame 0/1 labels: whether the frame's original position falls
/// inside the keyshot summary built from the ground-truth scores.
pub fn binary_labels(record: &VideoRecord, summary: &SummaryConfig) -> Result<Vec<f64>> {
    let mask = make_summary(record, &record.gtscore, summary)?;
    Ok(record.picks.iter().map(|&p| if mask.mask[p] { 1.0 } else { 0.0 }).collect())
}

/// Ground-truth scores scaled to `[0, 1]` per video; constant scores map to
/// 0.5.
pub fn regression_targets(record: &VideoRecord) -> Vec<f64> {
    let lo = record.gtscore.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = record.gtscore.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        record.gtscore.iter().map(|g| (g - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; record.gtscore.len()]
    }
}

pub fn targets(record: &VideoRecord, config: &TrainConfig) -> Result<Vec<f64>> {
    match config.loss_mode {
        LossMode::Binary => binary_labels(record, &config.summary),
        LossMode::Regression => Ok(regression_targets(record)),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss value for plain logits (no gradient); same formulas as the tape ops.
pub fn loss(logits: &[f64], targets: &[f64], mode: LossMode) -> Result<f64> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(Error::Contract(format!(
            "loss over {} logits and {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let n = logits.len() as f64;
    let total: f64 = match mode {
        LossMode::Binary => logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum(),
        LossMode::Regression => logits.iter().zip(targets).map(|(&z, &t)| (sigmoid(z) - t).powi(2)).sum(),
    };
    Ok(total / n)
}
