//! Synthetic videos with a planted signal, for testing without benchmark data.
//!
//! Each video carries a smooth low-dimensional latent trajectory `z_t`
//! (a few random sinusoids per dimension). Features are a fixed random
//! projection of `z_t` plus a per-video offset and per-frame noise.
//! Importance is `sigmoid(gain * w . z_t)` for a fixed direction `w`; each
//! simulated user perturbs and quantizes it to five levels, and `gtscore` is
//! the users' average. User summaries come from the knapsack pipeline run on
//! each user's own scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, VideoRecord};
use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::summarize::{make_summary, SegmentSet, SummaryConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub n_users: usize,
    /// Standard deviation of per-frame feature noise, before scaling.
    pub feature_noise: f64,
    /// Overall multiplier on features; the default gives a per-dimension
    /// spread comparable to pooled CNN activations.
    pub feature_scale: f64,
    /// Standard deviation of each user's deviation from the true importance.
    pub user_noise: f64,
    /// Original frames per sampled frame.
    pub frame_step: usize,
    /// Segment length range in original frames.
    pub segment_frames: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            feature_dim: 1024,
            latent_dim: 4,
            n_users: 5,
            feature_noise: 0.5,
            feature_scale: 0.25,
            user_noise: 0.08,
            frame_step: 15,
            segment_frames: (45, 150),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_segments(rng: &mut ChaCha8Rng, n_frames: usize, (lo, hi): (usize, usize)) -> SegmentSet {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < n_frames {
        let len = rng.gen_range(lo..=hi);
        let mut end = (start + len).min(n_frames) - 1;
        // fold a short remainder into this segment
        if n_frames - (end + 1) < lo {
            end = n_frames - 1;
        }
        ranges.push((start, end));
        start = end + 1;
    }
    SegmentSet::new(ranges, n_frames).expect("contiguous by construction")
}

/// `n_videos` records with `frames_range.0..=frames_range.1` sampled frames
/// each, fully determined by `seed` and `config`.
pub fn synth_dataset(n_videos: usize, frames_range: (usize, usize), seed: u64, config: &SynthConfig) -> Result<Dataset> {
    let (lo, hi) = frames_range;
    if lo == 0 || lo > hi {
        return Err(Error::config("frames_range", format!("need 1 <= min <= max, got {lo}..={hi}")));
    }
    if !(config.feature_scale > 0.0 && config.feature_scale.is_finite()) {
        return Err(Error::config("feature_scale", "must be a positive number"));
    }
    if config.feature_dim == 0 || config.latent_dim == 0 || config.frame_step == 0 {
        return Err(Error::config("synth", "feature_dim, latent_dim and frame_step must be positive"));
    }
    let (seg_lo, seg_hi) = config.segment_frames;
    if seg_lo == 0 || seg_lo > seg_hi {
        return Err(Error::config("segment_frames", format!("need 1 <= min <= max, got {seg_lo}..={seg_hi}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, k) = (config.feature_dim, config.latent_dim);
    let projection: Vec<f64> = (0..k * d).map(|_| normal(&mut rng)).collect();
    let direction: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    let gain = 2.0 / norm;

    let mut videos = Vec::with_capacity(n_videos);
    for vi in 0..n_videos {
        let n = rng.gen_range(lo..=hi);
        // latent: per dimension, sum of three sinusoids with periods of 15..60 samples
        let waves: Vec<[(f64, f64, f64); 3]> = (0..k)
            .map(|_| {
                [(); 3].map(|_| {
                    let period = rng.gen_range(15.0..60.0);
                    (rng.gen_range(0.3..1.0), std::f64::consts::TAU / period, rng.gen_range(0.0..std::f64::consts::TAU))
                })
            })
            .collect();
        let latent = |t: usize, j: usize| -> f64 { waves[j].iter().map(|(a, f, p)| a * (f * t as f64 + p).sin()).sum() };

        let offset: Vec<f64> = (0..d).map(|_| 0.5 * normal(&mut rng)).collect();
        let mut features = Matrix::zeros(n, d);
        let mut truth = Vec::with_capacity(n);
        for t in 0..n {
            let z: Vec<f64> = (0..k).map(|j| latent(t, j)).collect();
            truth.push(sigmoid(gain * z.iter().zip(&direction).map(|(a, b)| a * b).sum::<f64>()));
            let row = features.row_mut(t);
            for (c, x) in row.iter_mut().enumerate() {
                let signal: f64 = (0..k).map(|j| z[j] * projection[j * d + c]).sum();
                // stored as f32 on disk
                let raw = signal + offset[c] + config.feature_noise * normal(&mut rng);
                *x = ((config.feature_scale * raw) as f32) as f64;
            }
        }

        let mut user_scores = Matrix::zeros(config.n_users, n);
        for u in 0..config.n_users {
            for (t, &g) in truth.iter().enumerate() {
                let s = (g + config.user_noise * normal(&mut rng)).clamp(0.0, 1.0);
                user_scores.set(u, t, (s * 4.0).round() / 4.0);
            }
        }
        let gtscore: Vec<f64> = if config.n_users == 0 {
            truth.clone()
        } else {
            (0..n)
                .map(|t| (0..config.n_users).map(|u| user_scores.get(u, t)).sum::<f64>() / config.n_users as f64)
                .collect()
        };

        let n_frames_original = n * config.frame_step;
        let mut record = VideoRecord {
            video_id: format!("video_{}", vi + 1),
            features,
            gtscore,
            user_scores: (config.n_users > 0).then_some(user_scores),
            segments: random_segments(&mut rng, n_frames_original, config.segment_frames),
            n_frames_original,
            picks: (0..n).map(|t| t * config.frame_step).collect(),
            user_summaries: Vec::new(),
        };
        let summary = SummaryConfig::default();
        let mut masks = Vec::with_capacity(config.n_users);
        if let Some(us) = &record.user_scores {
            for u in 0..us.rows() {
                masks.push(make_summary(&record, us.row(u), &summary)?.mask);
            }
        }
        record.user_summaries = masks;
        videos.push(record);
    }
    let dataset = Dataset {
        name: "synthetic".into(),
        feature_dim: d,
        videos,
    };
    dataset.validate()?;
    Ok(dataset)
}
