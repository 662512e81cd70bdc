//! Evaluation: rank correlations against ground-truth importance scores and
//! keyshot F1 against user summaries.

mod correlation;
mod f1;
mod report;

pub use correlation::{average_ranks, kendall_tau, pearson, spearman_rho};
pub use f1::{f1_eval, f1_score, DatasetKind, F1Mode};
pub use report::{evaluate_video, EvalReport, VideoEval};

use serde::{Deserialize, Serialize};

use crate::dataio::VideoRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Correlate with the averaged ground-truth score vector.
    #[default]
    GroundTruth,
    /// Mean of correlations with each individual annotation.
    PerAnnotation,
}

/// `(tau, rho)` of per-sampled-frame predictions for one video.
pub fn correlation_eval(predictions: &[f64], record: &VideoRecord, mode: CorrelationMode) -> Result<(f64, f64)> {
    if predictions.len() != record.gtscore.len() {
        return Err(Error::data(
            &record.video_id,
            "gtscore",
            format!("{} predictions for {} sampled frames", predictions.len(), record.gtscore.len()),
        ));
    }
    match mode {
        CorrelationMode::GroundTruth => Ok((
            kendall_tau(predictions, &record.gtscore)?,
            spearman_rho(predictions, &record.gtscore)?,
        )),
        CorrelationMode::PerAnnotation => {
            let users = record
                .user_scores
                .as_ref()
                .filter(|m| m.rows() > 0)
                .ok_or_else(|| Error::data(&record.video_id, "user_scores", "no per-annotation scores"))?;
            let (mut tau, mut rho) = (0.0, 0.0);
            for u in 0..users.rows() {
                tau += kendall_tau(predictions, users.row(u))?;
                rho += spearman_rho(predictions, users.row(u))?;
            }
            let k = users.rows() as f64;
            Ok((tau / k, rho / k))
        }
    }
}
