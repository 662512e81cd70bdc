use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_logits, train_one_split, Split, TrainConfig, TrainOutcome};
use crate::dataio::{Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::gnn::ModelParams;
use crate::metrics::{evaluate_video, CorrelationMode, EvalReport, F1Mode};

/// Evaluates a model on `records`. Correlations rank frames by logit (the
/// sigmoid is monotone, and ranking by logit avoids ties where it saturates
/// to exactly 0 or 1); the keyshot summary uses the probabilities.
pub fn evaluate_model(
    params: &ModelParams,
    records: &[&VideoRecord],
    correlation_mode: CorrelationMode,
    f1_mode: F1Mode,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let videos = records
        .par_iter()
        .map(|rec| {
            let logits = predict_logits(params, rec)?;
            let probs: Vec<f64> = logits.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect();
            evaluate_video(rec, &logits, &probs, correlation_mode, f1_mode, &config.summary)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_videos(videos, correlation_mode, f1_mode))
}

pub fn split_records<'d>(dataset: &'d Dataset, ids: &[String]) -> Result<Vec<&'d VideoRecord>> {
    ids.iter()
        .map(|id| {
            dataset
                .get(id)
                .ok_or_else(|| Error::Contract(format!("split names unknown video `{id}`")))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SplitResult {
    pub split: usize,
    pub outcome: TrainOutcome,
    pub report: EvalReport,
}

/// Means over splits of each split's validation means (undefined split
/// means are skipped).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValSummary {
    pub splits: usize,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub f1: Option<f64>,
}

impl CrossValSummary {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a EvalReport>) -> Self {
        let reports: Vec<&EvalReport> = reports.into_iter().collect();
        let mean = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| f(r)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        CrossValSummary {
            splits: reports.len(),
            tau: mean(&|r| r.tau_mean),
            rho: mean(&|r| r.rho_mean),
            f1: mean(&|r| r.f1_aggregate),
        }
    }
}

/// Trains and evaluates every split in order. Split `i` trains with seed
/// `config.seed + i`.
pub fn cross_validate(
    dataset: &Dataset,
    splits: &[Split],
    config: &TrainConfig,
    correlation_mode: CorrelationMode,
    f1_mode: F1Mode,
) -> Result<Vec<SplitResult>> {
    let mut results = Vec::with_capacity(splits.len());
    for (i, split) in splits.iter().enumerate() {
        let cfg = TrainConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..config.clone()
        };
        let outcome = train_one_split(dataset, split, &cfg)?;
        let val = split_records(dataset, &split.val_video_ids)?;
        let report = evaluate_model(&outcome.params, &val, correlation_mode, f1_mode, &cfg)?;
        log::info!(
            "split {i}: best epoch {}, tau {:?}, rho {:?}, f1 {:?}",
            outcome.best_epoch,
            report.tau_mean,
            report.rho_mean,
            report.f1_aggregate
        );
        results.push(SplitResult {
            split: i,
            outcome,
            report,
        });
    }
    Ok(results)
}
