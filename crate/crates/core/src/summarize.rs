//! From per-frame scores to a keyshot summary: hold 2 fps scores across the
//! original frames, score each precomputed segment, and pick segments with an
//! exact 0/1 knapsack under a length budget.

use serde::{Deserialize, Serialize};

use crate::dataio::VideoRecord;
use crate::error::{Error, Result};

/// Contiguous inclusive `[start, end]` ranges covering `0..n_frames`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSet {
    ranges: Vec<(usize, usize)>,
}

impl SegmentSet {
    pub fn new(ranges: Vec<(usize, usize)>, n_frames: usize) -> Result<Self> {
        let bad = |msg: String| Error::data("<segments>", "change_points", msg);
        if ranges.is_empty() {
            return Err(bad("no segments".into()));
        }
        let mut next = 0;
        for (i, &(s, e)) in ranges.iter().enumerate() {
            if s != next {
                return Err(bad(format!("segment {i} starts at {s}, expected {next}")));
            }
            if e < s {
                return Err(bad(format!("segment {i} is empty ({s}..={e})")));
            }
            next = e + 1;
        }
        if next != n_frames {
            return Err(bad(format!("segments cover {next} frames, video has {n_frames}")));
        }
        Ok(SegmentSet { ranges })
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn frame_counts(&self) -> Vec<usize> {
        self.ranges.iter().map(|&(s, e)| e - s + 1).collect()
    }

    pub fn n_frames(&self) -> usize {
        self.ranges.last().map_or(0, |&(_, e)| e + 1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentValue {
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    /// Fraction of original frames the summary may keep.
    pub budget_fraction: f64,
    pub segment_value: SegmentValue,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            budget_fraction: 0.15,
            segment_value: SegmentValue::Mean,
        }
    }
}

impl SummaryConfig {
    pub fn budget(&self, n_frames: usize) -> usize {
        (self.budget_fraction * n_frames as f64).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SummaryMask {
    pub mask: Vec<bool>,
    /// Chosen segment indices, ascending.
    pub selected: Vec<usize>,
    pub budget: usize,
}

impl SummaryMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// JSON form of a summary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryExport {
    pub video_id: String,
    pub selected_segments: Vec<[usize; 2]>,
    pub mask_length: usize,
    pub budget: usize,
}

impl SummaryExport {
    pub fn new(video_id: &str, summary: &SummaryMask, segments: &SegmentSet) -> Self {
        SummaryExport {
            video_id: video_id.to_string(),
            selected_segments: summary
                .selected
                .iter()
                .map(|&i| {
                    let (s, e) = segments.ranges()[i];
                    [s, e]
                })
                .collect(),
            mask_length: summary.mask.len(),
            budget: summary.budget,
        }
    }
}

/// Step-hold: original frame `f` takes the score of the last pick at or
/// before `f` (the first pick's score before it).
pub fn upsample_scores(scores: &[f64], picks: &[usize], n_frames: usize) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::data("<scores>", "picks", msg);
    if picks.is_empty() {
        return Err(bad("no picks".into()));
    }
    if picks.len() != scores.len() {
        return Err(bad(format!("{} picks for {} scores", picks.len(), scores.len())));
    }
    if picks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("picks not strictly increasing".into()));
    }
    if *picks.last().expect("non-empty") >= n_frames {
        return Err(bad(format!("pick beyond {n_frames} frames")));
    }
    let mut out = Vec::with_capacity(n_frames);
    let mut k = 0;
    for f in 0..n_frames {
        while k + 1 < picks.len() && picks[k + 1] <= f {
            k += 1;
        }
        out.push(scores[k]);
    }
    Ok(out)
}

pub fn segment_scores(frame_scores: &[f64], segments: &SegmentSet, mode: SegmentValue) -> Result<Vec<f64>> {
    if segments.n_frames() != frame_scores.len() {
        return Err(Error::data(
            "<scores>",
            "change_points",
            format!("segments cover {} frames, {} scores given", segments.n_frames(), frame_scores.len()),
        ));
    }
    Ok(segments
        .ranges()
        .iter()
        .map(|&(s, e)| {
            let sum: f64 = frame_scores[s..=e].iter().sum();
            match mode {
                SegmentValue::Sum => sum,
                SegmentValue::Mean => sum / (e - s + 1) as f64,
            }
        })
        .collect())
}

/// Exact 0/1 knapsack by dynamic programming over (item, capacity).
///
/// Among optimal selections the backtrack drops an item whenever dropping
/// it keeps the optimum, scanning from the last item down. The result is the
/// optimal set that is smallest when sets are compared by their highest
/// differing index, so ties go to lower segment indices.
pub fn knapsack_select(values: &[f64], weights: &[usize], budget: usize) -> Vec<usize> {
    assert_eq!(values.len(), weights.len(), "one weight per value");
    let n = values.len();
    let width = budget + 1;
    // best[i * width + c]: best value using items < i within capacity c
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in 0..n {
        let (prev, cur) = best[i * width..(i + 2) * width].split_at_mut(width);
        let (v, wt) = (values[i], weights[i]);
        for c in 0..width {
            let skip = prev[c];
            cur[c] = if wt <= c {
                let take = prev[c - wt] + v;
                if take > skip {
                    take
                } else {
                    skip
                }
            } else {
                skip
            };
        }
    }
    let mut chosen = Vec::new();
    let mut c = budget;
    for i in (0..n).rev() {
        if best[(i + 1) * width + c] != best[i * width + c] {
            chosen.push(i);
            c -= weights[i];
        }
    }
    chosen.reverse();
    chosen
}

/// Upsamples, scores segments and runs the knapsack with a budget of
/// `floor(budget_fraction * n_frames_original)` frames.
pub fn make_summary(record: &VideoRecord, frame_scores: &[f64], config: &SummaryConfig) -> Result<SummaryMask> {
    let n = record.n_frames_original;
    let full = upsample_scores(frame_scores, &record.picks, n)
        .map_err(|e| with_video(e, &record.video_id))?;
    let values = segment_scores(&full, &record.segments, config.segment_value)
        .map_err(|e| with_video(e, &record.video_id))?;
    let weights = record.segments.frame_counts();
    let budget = config.budget(n);
    let selected = knapsack_select(&values, &weights, budget);
    let mut mask = vec![false; n];
    for &i in &selected {
        let (s, e) = record.segments.ranges()[i];
        mask[s..=e].iter_mut().for_each(|m| *m = true);
    }
    Ok(SummaryMask { mask, selected, budget })
}

fn with_video(err: Error, video: &str) -> Error {
    match err {
        Error::Data { field, message, .. } => Error::Data {
            video: video.to_string(),
            field,
            message,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive search; among equal optima keeps the subset whose bitmask
    /// is numerically smallest.
    fn brute_force(values: &[f64], weights: &[usize], budget: usize) -> Vec<usize> {
        let n = values.len();
        let mut best_val = 0.0;
        let mut best_mask = 0u32;
        for mask in 0u32..(1 << n) {
            let mut w = 0;
            let mut v = 0.0;
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    w += weights[i];
                    v += values[i];
                }
            }
            if w <= budget && v > best_val {
                best_val = v;
                best_mask = mask;
            }
        }
        (0..n).filter(|i| best_mask & (1 << i) != 0).collect()
    }

    #[test]
    fn knapsack_examples() {
        assert_eq!(knapsack_select(&[1.0, 2.0], &[5, 5], 5), vec![1]);
        assert_eq!(knapsack_select(&[1.0, 2.0, 0.5], &[3, 4, 2], 9), vec![0, 1, 2]);
        assert_eq!(knapsack_select(&[1.0, 1.0], &[5, 5], 5), vec![0]);
        assert!(knapsack_select(&[1.0, 2.0], &[1, 1], 0).is_empty());
        assert!(knapsack_select(&[], &[], 10).is_empty());
    }

    #[test]
    fn knapsack_matches_enumeration_on_12_segments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let values: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
            let weights: Vec<usize> = (0..12).map(|_| rng.gen_range(1..30)).collect();
            let budget = rng.gen_range(0..150);
            assert_eq!(knapsack_select(&values, &weights, budget), brute_force(&values, &weights, budget));
        }
    }

    proptest! {
        #[test]
        fn knapsack_equals_brute_force_with_ties(
            items in proptest::collection::vec((0u32..6, 1usize..12), 0..=12),
            budget in 0usize..60,
        ) {
            let values: Vec<f64> = items.iter().map(|&(v, _)| v as f64).collect();
            let weights: Vec<usize> = items.iter().map(|&(_, w)| w).collect();
            let got = knapsack_select(&values, &weights, budget);
            prop_assert_eq!(&got, &brute_force(&values, &weights, budget));
            prop_assert!(got.iter().map(|&i| weights[i]).sum::<usize>() <= budget);
        }

        #[test]
        fn raising_a_uniquely_chosen_item_keeps_it(
            values in proptest::collection::vec(0.0f64..1.0, 1..=10),
            weights in proptest::collection::vec(1usize..10, 10),
            budget in 1usize..40,
            bump in 0.0f64..1.0,
        ) {
            let weights = &weights[..values.len()];
            let chosen = knapsack_select(&values, weights, budget);
            for &i in &chosen {
                let mut raised = values.clone();
                raised[i] += bump;
                prop_assert!(knapsack_select(&raised, weights, budget).contains(&i));
            }
        }

        #[test]
        fn upsample_then_sample_recovers_scores(
            gaps in proptest::collection::vec(1usize..20, 1..30),
            tail in 1usize..20,
        ) {
            let picks: Vec<usize> = gaps.iter().scan(0, |a, g| { let p = *a; *a += g; Some(p) }).collect();
            let n = picks.last().unwrap() + tail;
            let scores: Vec<f64> = (0..picks.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let full = upsample_scores(&scores, &picks, n).unwrap();
            prop_assert_eq!(full.len(), n);
            let back: Vec<f64> = picks.iter().map(|&p| full[p]).collect();
            prop_assert_eq!(back, scores);
        }
    }

    #[test]
    fn upsample_examples() {
        assert_eq!(upsample_scores(&[0.7], &[0], 5).unwrap(), vec![0.7; 5]);
        assert_eq!(upsample_scores(&[1.0, 2.0], &[0, 2], 4).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(upsample_scores(&[], &[], 4).is_err());
        assert!(upsample_scores(&[1.0, 2.0], &[2, 2], 4).is_err());
        assert!(upsample_scores(&[1.0], &[4], 4).is_err());
    }

    #[test]
    fn segment_score_examples() {
        let segs = SegmentSet::new(vec![(0, 1), (2, 4), (5, 5)], 6).unwrap();
        assert_eq!(segment_scores(&[0.3; 6], &segs, SegmentValue::Mean).unwrap(), vec![0.3, 0.3, 0.3]);
        let ones = SegmentSet::new((0..4).map(|i| (i, i)).collect(), 4).unwrap();
        let s = [0.1, 0.9, 0.4, 0.2];
        assert_eq!(segment_scores(&s, &ones, SegmentValue::Mean).unwrap(), s.to_vec());
        let f = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(segment_scores(&f, &segs, SegmentValue::Sum).unwrap(), vec![3.0, 12.0, 6.0]);
        // loop oracle
        let means = segment_scores(&f, &segs, SegmentValue::Mean).unwrap();
        for (k, &(a, b)) in segs.ranges().iter().enumerate() {
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for (i, v) in f.iter().enumerate() {
                if i >= a && i <= b {
                    acc += v;
                    cnt += 1.0;
                }
            }
            assert!((means[k] - acc / cnt).abs() < 1e-15);
        }
        assert!(segment_scores(&[1.0; 5], &segs, SegmentValue::Mean).is_err());
    }

    #[test]
    fn segment_set_validation() {
        assert!(SegmentSet::new(vec![(0, 2), (4, 5)], 6).is_err());
        assert!(SegmentSet::new(vec![(0, 2), (3, 4)], 6).is_err());
        assert!(SegmentSet::new(vec![(0, 2), (3, 2)], 3).is_err());
        assert!(SegmentSet::new(vec![], 0).is_err());
        assert_eq!(SegmentSet::new(vec![(0, 2), (3, 5)], 6).unwrap().frame_counts(), vec![3, 3]);
    }
}
