//! Ground-truth summaries and per-user reference masks.

use serde::{Deserialize, Serialize};

use crate::data_io::{UserAnnotation, VideoRecord};
use crate::error::{Error, Result};
use crate::evaluation::UserAggregation;
use crate::segmentation::{kts_segment, ShotList};
use crate::selection::{make_summary, SummaryResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KtsParams {
    pub max_shots: usize,
    pub penalty: f64,
}

impl Default for KtsParams {
    fn default() -> Self {
        KtsParams { max_shots: 20, penalty: 1.0 }
    }
}

/// Provided shots when the annotation has them, otherwise detected ones.
pub fn video_shots(video: &VideoRecord, kts: KtsParams) -> Result<ShotList> {
    match &video.shots {
        Some(s) => Ok(s.clone()),
        None => kts_segment(&video.features, kts.max_shots.min(video.valid_len()), kts.penalty),
    }
}

/// Per-frame average over users, in `[0, 1]`. Score curves on a larger
/// scale are divided by their maximum; masks average to selection rates.
pub fn mean_user_scores(users: &UserAnnotation) -> Result<Vec<f64>> {
    let curves: Vec<Vec<f64>> = match users {
        UserAnnotation::Scores(s) => s.clone(),
        UserAnnotation::Masks(m) => m.iter().map(|u| u.iter().map(|&b| b as u8 as f64).collect()).collect(),
    };
    let n = curves.len();
    let t = curves.first().map_or(0, Vec::len);
    if n == 0 || t == 0 {
        return Err(Error::Data("no user annotations".into()));
    }
    let mut mean = vec![0.0; t];
    for c in &curves {
        if c.len() != t {
            return Err(Error::Data(format!("user curve of length {}, expected {t}", c.len())));
        }
        for (m, &v) in mean.iter_mut().zip(c) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Data(format!("user score {v} is not a finite nonnegative value")));
            }
            *m += v / n as f64;
        }
    }
    let max = mean.iter().copied().fold(0.0, f64::max);
    if max > 1.0 {
        mean.iter_mut().for_each(|v| *v /= max);
    }
    Ok(mean)
}

/// Key-shot summary of the averaged user curve.
pub fn gt_summary(video: &VideoRecord, shots: &ShotList, budget_ratio: f64) -> Result<SummaryResult> {
    make_summary(&mean_user_scores(&video.users)?, shots.shots(), budget_ratio)
}

/// Frame indices of a keyframe mask, ascending.
pub fn mask_frames(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
}

/// One reference mask per user: score curves go through the same key-shot
/// conversion as predictions, masks are used as given.
pub fn user_reference_masks(video: &VideoRecord, shots: &ShotList, budget_ratio: f64) -> Result<Vec<Vec<bool>>> {
    match &video.users {
        UserAnnotation::Masks(m) => Ok(m.clone()),
        UserAnnotation::Scores(curves) => curves
            .iter()
            .map(|c| {
                let max = c.iter().copied().fold(0.0, f64::max);
                let scaled: Vec<f64> = if max > 1.0 { c.iter().map(|v| v / max).collect() } else { c.clone() };
                Ok(make_summary(&scaled, shots.shots(), budget_ratio)?.keyframe_mask)
            })
            .collect(),
    }
}

/// Max for mask annotations, mean for score curves.
pub fn default_aggregation(users: &UserAnnotation) -> UserAggregation {
    match users {
        UserAnnotation::Masks(_) => UserAggregation::Max,
        UserAnnotation::Scores(_) => UserAggregation::Mean,
    }
}
