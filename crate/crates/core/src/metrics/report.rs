use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{correlation_eval, f1_eval, CorrelationMode, F1Mode};
use crate::dataio::VideoRecord;
use crate::error::{Error, Result};
use crate::summarize::{make_summary, SummaryConfig};

/// Per-video scores. A correlation is `None` when it is undefined (e.g. a
/// constant prediction vector); such videos are skipped in the means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video_id: String,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub videos: Vec<VideoEval>,
    pub tau_mean: Option<f64>,
    pub rho_mean: Option<f64>,
    pub f1_aggregate: Option<f64>,
    pub correlation_mode: CorrelationMode,
    pub f1_mode: F1Mode,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores one video. `ranking` feeds the correlations and `scores` the
/// knapsack summary; they differ when a model's logits carry the ranking and
/// its probabilities the summary values. Undefined correlations are recorded
/// as skipped; F1 is skipped for videos without user summaries.
pub fn evaluate_video(
    record: &VideoRecord,
    ranking: &[f64],
    scores: &[f64],
    correlation_mode: CorrelationMode,
    f1_mode: F1Mode,
    summary: &SummaryConfig,
) -> Result<VideoEval> {
    let (tau, rho) = match correlation_eval(ranking, record, correlation_mode) {
        Ok((t, r)) => (Some(t), Some(r)),
        Err(Error::UndefinedCorrelation(why)) => {
            log::warn!("video {}: correlation skipped ({why})", record.video_id);
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let f1 = if record.user_summaries.is_empty() {
        None
    } else {
        let mask = make_summary(record, scores, summary)?;
        Some(f1_eval(&mask.mask, &record.user_summaries, f1_mode).map_err(|e| match e {
            Error::Data { field, message, .. } => Error::Data {
                video: record.video_id.clone(),
                field,
                message,
            },
            other => other,
        })?)
    };
    Ok(VideoEval {
        video_id: record.video_id.clone(),
        tau,
        rho,
        f1,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn from_videos(videos: Vec<VideoEval>, correlation_mode: CorrelationMode, f1_mode: F1Mode) -> Self {
        EvalReport {
            tau_mean: mean(videos.iter().map(|v| v.tau)),
            rho_mean: mean(videos.iter().map(|v| v.rho)),
            f1_aggregate: mean(videos.iter().map(|v| v.f1)),
            videos,
            correlation_mode,
            f1_mode,
        }
    }

    /// Scores every record against its predictions (one vector per record,
    /// per sampled frame), used both for ranking and for the summary.
    pub fn evaluate(
        records: &[&VideoRecord],
        predictions: &[Vec<f64>],
        correlation_mode: CorrelationMode,
        f1_mode: F1Mode,
        summary: &SummaryConfig,
    ) -> Result<Self> {
        if records.len() != predictions.len() {
            return Err(Error::Contract(format!(
                "{} records but {} prediction vectors",
                records.len(),
                predictions.len()
            )));
        }
        let videos = records
            .iter()
            .zip(predictions)
            .map(|(rec, pred)| evaluate_video(rec, pred, pred, correlation_mode, f1_mode, summary))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_videos(videos, correlation_mode, f1_mode))
    }

    pub fn skipped(&self) -> usize {
        self.videos.iter().filter(|v| v.tau.is_none()).count()
    }

    /// One row per video plus a final `MEAN` row; undefined cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,tau,rho,f1\n");
        for v in &self.videos {
            let _ = writeln!(out, "{},{},{},{}", v.video_id, fmt_opt(v.tau), fmt_opt(v.rho), fmt_opt(v.f1));
        }
        let _ = writeln!(
            out,
            "MEAN,{},{},{}",
            fmt_opt(self.tau_mean),
            fmt_opt(self.rho_mean),
            fmt_opt(self.f1_aggregate)
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
