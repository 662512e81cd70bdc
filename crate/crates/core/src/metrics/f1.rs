use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How per-user F1 scores are combined for one video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Mode {
    /// Best match over users (SumMe convention).
    Max,
    /// Average over users (TVSum convention).
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Summe,
    Tvsum,
}

impl DatasetKind {
    pub fn f1_mode(self) -> F1Mode {
        match self {
            DatasetKind::Summe => F1Mode::Max,
            DatasetKind::Tvsum => F1Mode::Mean,
        }
    }

    /// Guesses the benchmark from a dataset name; anything that is not SumMe
    /// is treated like TVSum.
    pub fn from_name(name: &str) -> Self {
        if name.to_ascii_lowercase().contains("summe") {
            DatasetKind::Summe
        } else {
            DatasetKind::Tvsum
        }
    }
}

/// F1 between two masks, in `[0, 1]`; zero when either is empty.
pub fn f1_score(pred: &[bool], user: &[bool]) -> f64 {
    let overlap = pred.iter().zip(user).filter(|(p, u)| **p && **u).count() as f64;
    let np = pred.iter().filter(|p| **p).count() as f64;
    let nu = user.iter().filter(|u| **u).count() as f64;
    if overlap == 0.0 || np == 0.0 || nu == 0.0 {
        return 0.0;
    }
    let (precision, recall) = (overlap / np, overlap / nu);
    2.0 * precision * recall / (precision + recall)
}

/// Percentage F1 of a predicted mask against every user summary.
pub fn f1_eval(pred: &[bool], user_summaries: &[Vec<bool>], mode: F1Mode) -> Result<f64> {
    if user_summaries.is_empty() {
        return Err(Error::data("<eval>", "user_summary", "no user summaries"));
    }
    let mut scores = Vec::with_capacity(user_summaries.len());
    for (u, user) in user_summaries.iter().enumerate() {
        if user.len() != pred.len() {
            return Err(Error::data(
                "<eval>",
                "user_summary",
                format!("user {u} mask has {} frames, prediction {}", user.len(), pred.len()),
            ));
        }
        scores.push(f1_score(pred, user));
    }
    let agg = match mode {
        F1Mode::Max => scores.iter().copied().fold(0.0, f64::max),
        F1Mode::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    };
    Ok(agg * 100.0)
}
