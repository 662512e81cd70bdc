//! Video records and the portable on-disk dataset format (see `FORMAT.md`).

mod format;
mod synth;

pub use format::{read_dataset, write_dataset, ArrayEntry, DatasetManifest, Dtype, VideoEntry, FORMAT_VERSION, MAGIC};
pub use synth::{synth_dataset, SynthConfig};

use crate::diffcore::Matrix;
use crate::error::{Error, Result};
use crate::summarize::SegmentSet;

/// One video: 2 fps features and scores plus everything needed to build and
/// score keyshot summaries over the original frames.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// `n_sampled x feature_dim`.
    pub features: Matrix,
    /// Averaged importance per sampled frame.
    pub gtscore: Vec<f64>,
    /// Individual annotations, `n_users x n_sampled`, when the source has them.
    pub user_scores: Option<Matrix>,
    /// Change points over the original frames.
    pub segments: SegmentSet,
    pub n_frames_original: usize,
    /// Original frame index of every sampled frame.
    pub picks: Vec<usize>,
    /// One mask over the original frames per user.
    pub user_summaries: Vec<Vec<bool>>,
}

impl VideoRecord {
    pub fn n_sampled(&self) -> usize {
        self.features.rows()
    }

    pub fn n_frame_per_seg(&self) -> Vec<usize> {
        self.segments.frame_counts()
    }

    /// Checks every record invariant; errors name this video and the field.
    pub fn validate(&self) -> Result<()> {
        let id = self.video_id.as_str();
        let bad = |field: &str, msg: String| Err(Error::data(id, field, msg));
        let n = self.features.rows();
        if n == 0 {
            return bad("features", "no sampled frames".into());
        }
        if !self.features.is_finite() {
            return bad("features", "non-finite value".into());
        }
        if self.gtscore.len() != n {
            return bad("gtscore", format!("{} scores for {n} feature rows", self.gtscore.len()));
        }
        if self.gtscore.iter().any(|v| !v.is_finite()) {
            return bad("gtscore", "non-finite value".into());
        }
        if self.picks.len() != n {
            return bad("picks", format!("{} picks for {n} feature rows", self.picks.len()));
        }
        if self.picks.windows(2).any(|w| w[0] >= w[1]) {
            return bad("picks", "not strictly increasing".into());
        }
        if self.picks[n - 1] >= self.n_frames_original {
            return bad(
                "picks",
                format!("pick {} beyond {} original frames", self.picks[n - 1], self.n_frames_original),
            );
        }
        if self.segments.n_frames() != self.n_frames_original {
            return bad(
                "change_points",
                format!("cover {} frames, video has {}", self.segments.n_frames(), self.n_frames_original),
            );
        }
        for (u, mask) in self.user_summaries.iter().enumerate() {
            if mask.len() != self.n_frames_original {
                return bad(
                    "user_summary",
                    format!("user {u} mask has {} frames, video has {}", mask.len(), self.n_frames_original),
                );
            }
        }
        if let Some(us) = &self.user_scores {
            if us.cols() != n {
                return bad("user_scores", format!("{} columns for {n} sampled frames", us.cols()));
            }
            if !us.is_finite() {
                return bad("user_scores", "non-finite value".into());
            }
        }
        Ok(())
    }
}

/// A named collection of records sharing one feature dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_dim: usize,
    pub videos: Vec<VideoRecord>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for v in &self.videos {
            v.validate()?;
            if v.features.cols() != self.feature_dim {
                return Err(Error::data(
                    &v.video_id,
                    "features",
                    format!("{} columns, dataset declares {}", v.features.cols(), self.feature_dim),
                ));
            }
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::data(&v.video_id, "video_id", "duplicate id"));
            }
        }
        Ok(())
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.video_id.clone()).collect()
    }
}
