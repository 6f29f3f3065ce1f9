//! Frame scores → key shots under a length budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Shot;

/// Fraction of the video a summary may cover.
pub const DEFAULT_BUDGET_RATIO: f64 = 0.15;

/// How member frame scores are pooled into a shot score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotPooling {
    #[default]
    Mean,
    Max,
}

/// Per-shot mean of the member frame scores.
pub fn shot_scores(frame_scores: &[f64], shots: &[Shot]) -> Result<Vec<f64>> {
    shot_scores_with(frame_scores, shots, ShotPooling::Mean)
}

pub fn shot_scores_with(frame_scores: &[f64], shots: &[Shot], pooling: ShotPooling) -> Result<Vec<f64>> {
    let covered = shots.last().map_or(0, |s| s.end);
    if covered != frame_scores.len() {
        return Err(Error::Precondition(format!(
            "shots cover {covered} frames but {} frame scores were given",
            frame_scores.len()
        )));
    }
    shots
        .iter()
        .map(|s| {
            if s.is_empty() {
                return Err(Error::Segmentation(format!("empty shot [{}, {})", s.start, s.end)));
            }
            let frames = &frame_scores[s.frames()];
            Ok(match pooling {
                ShotPooling::Mean => frames.iter().sum::<f64>() / frames.len() as f64,
                ShotPooling::Max => frames.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect()
}

/// Frame budget for a video of `n_frames`: `floor(ratio * n_frames)`.
pub fn budget_frames(ratio: f64, n_frames: usize) -> usize {
    // The epsilon absorbs representation error such as 0.15 * 60 = 8.999…
    (ratio * n_frames as f64 + 1e-9).floor().max(0.0) as usize
}

/// 0/1 knapsack over shots: maximizes total score with total length within
/// `budget`. Among optimal sets the lexicographically smallest ascending
/// index list is returned (so the empty set wins whenever it is optimal).
pub fn knapsack_select(scores: &[f64], lengths: &[usize], budget: usize) -> Vec<usize> {
    assert_eq!(scores.len(), lengths.len(), "one length per shot");
    let n = scores.len();
    let width = budget + 1;
    // best[i * width + c]: optimum over items i.. with capacity c
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        for c in 0..=budget {
            let skip = best[(i + 1) * width + c];
            let v = if lengths[i] <= c {
                let take = scores[i] + best[(i + 1) * width + c - lengths[i]];
                if take > skip {
                    take
                } else {
                    skip
                }
            } else {
                skip
            };
            best[i * width + c] = v;
        }
    }

    let mut selected = Vec::new();
    let mut c = budget;
    for i in 0..n {
        let here = best[i * width + c];
        if here <= 0.0 {
            break;
        }
        if lengths[i] <= c && scores[i] + best[(i + 1) * width + c - lengths[i]] == here {
            selected.push(i);
            c -= lengths[i];
        }
    }
    selected
}

/// Outcome of converting frame scores into a key-shot summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryResult {
    pub frame_scores: Vec<f64>,
    pub selected_shots: Vec<usize>,
    pub keyframe_mask: Vec<bool>,
    pub budget_ratio: f64,
}

impl SummaryResult {
    pub fn selected_frames(&self) -> usize {
        self.keyframe_mask.iter().filter(|&&b| b).count()
    }
}

/// Shot scores → knapsack → keyframe mask, with mean pooling.
pub fn make_summary(frame_scores: &[f64], shots: &[Shot], budget_ratio: f64) -> Result<SummaryResult> {
    make_summary_with(frame_scores, shots, budget_ratio, ShotPooling::Mean)
}

pub fn make_summary_with(
    frame_scores: &[f64],
    shots: &[Shot],
    budget_ratio: f64,
    pooling: ShotPooling,
) -> Result<SummaryResult> {
    if !(0.0..=1.0).contains(&budget_ratio) {
        return Err(Error::Precondition(format!("budget ratio {budget_ratio} outside [0, 1]")));
    }
    if let Some(bad) = frame_scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("frame score {bad}")));
    }
    let scores = shot_scores_with(frame_scores, shots, pooling)?;
    let lengths: Vec<usize> = shots.iter().map(Shot::len).collect();
    let selected_shots = knapsack_select(&scores, &lengths, budget_frames(budget_ratio, frame_scores.len()));
    let mut keyframe_mask = vec![false; frame_scores.len()];
    for &s in &selected_shots {
        keyframe_mask[shots[s].frames()].iter_mut().for_each(|b| *b = true);
    }
    Ok(SummaryResult {
        frame_scores: frame_scores.to_vec(),
        selected_shots,
        keyframe_mask,
        budget_ratio,
    })
}

/// Per-video summary record: selected shot ranges, the keyframe mask as
/// `[value, run_length]` pairs and optional overlap scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryExport {
    pub id: String,
    pub n_frames: usize,
    pub budget_ratio: f64,
    pub selected_shots: Vec<[usize; 2]>,
    pub keyframe_rle: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_measure: Option<f64>,
}

impl SummaryExport {
    pub fn new(id: &str, summary: &SummaryResult, shots: &[Shot]) -> Self {
        SummaryExport {
            id: id.to_string(),
            n_frames: summary.keyframe_mask.len(),
            budget_ratio: summary.budget_ratio,
            selected_shots: summary.selected_shots.iter().map(|&i| [shots[i].start, shots[i].end]).collect(),
            keyframe_rle: run_length_encode(&summary.keyframe_mask),
            precision: None,
            recall: None,
            f_measure: None,
        }
    }

    pub fn keyframe_mask(&self) -> Vec<bool> {
        self.keyframe_rle
            .iter()
            .flat_map(|&[v, n]| std::iter::repeat(v == 1).take(n))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

pub fn run_length_encode(mask: &[bool]) -> Vec<[usize; 2]> {
    let mut runs: Vec<[usize; 2]> = Vec::new();
    for &b in mask {
        match runs.last_mut() {
            Some(r) if r[0] == b as usize => r[1] += 1,
            _ => runs.push([b as usize, 1]),
        }
    }
    runs
}
