//! Import from the community archive layout of the public summarization
//! benchmarks, exported to JSON (one object per video, same field names as
//! the HDF5 groups):
//!
//! | archive field   | meaning                                              | mapped to                     |
//! |-----------------|------------------------------------------------------|-------------------------------|
//! | `features`      | `n_steps × D` features of the sampled frames         | feature file                  |
//! | `picks`         | original frame index of each sampled frame           | shot and mask subsampling     |
//! | `n_frames`      | original frame count                                 | range check                   |
//! | `change_points` | `[first, last]` original frames of each shot         | `shots`, regrouped by `picks` |
//! | `user_summary`  | `n_users × n_frames` 0/1 selections                  | `user_masks` at `picks`       |
//! | `gtscore`       | `n_steps` mean importance                            | `user_scores` when no users   |

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::data_io::{save_dataset, Dataset, UserAnnotation, VideoRecord};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::segmentation::{Shot, ShotList, ShotSource};

#[derive(Clone, Debug, Deserialize)]
pub struct ArchiveVideo {
    pub features: Vec<Vec<f32>>,
    pub picks: Vec<usize>,
    pub n_frames: usize,
    #[serde(default)]
    pub change_points: Vec<[usize; 2]>,
    #[serde(default)]
    pub user_summary: Vec<Vec<f64>>,
    #[serde(default)]
    pub gtscore: Vec<f64>,
}

impl ArchiveVideo {
    pub fn into_record(self, id: String, fps_original: f64, fps_sampled: f64) -> Result<VideoRecord> {
        let t = self.features.len();
        let err = |m: String| Error::Data(format!("video {id}: {m}"));
        if self.picks.len() != t {
            return Err(err(format!("{} picks for {t} feature rows", self.picks.len())));
        }
        if self.picks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(err("picks are not strictly increasing".into()));
        }
        if let Some(&p) = self.picks.iter().find(|&&p| p >= self.n_frames) {
            return Err(err(format!("pick {p} beyond n_frames {}", self.n_frames)));
        }
        let dim = self.features.first().map_or(0, Vec::len);
        let data: Vec<f32> = self.features.into_iter().flatten().collect();
        let features = Matrix::from_vec(t, dim, data).map_err(|_| err("ragged feature rows".into()))?;

        // sampled frame i belongs to the original shot containing picks[i];
        // runs of equal shot ids become shots at the sampled rate
        let shots = if self.change_points.is_empty() {
            None
        } else {
            let shot_of = |p: usize| self.change_points.iter().position(|cp| cp[0] <= p && p <= cp[1]);
            let mut shots = Vec::new();
            let mut start = 0;
            for i in 1..=t {
                if i == t || shot_of(self.picks[i]) != shot_of(self.picks[start]) {
                    shots.push(Shot::new(start, i));
                    start = i;
                }
            }
            Some(ShotList::new(shots, t, ShotSource::Provided)?)
        };

        let users = if !self.user_summary.is_empty() {
            let masks = self
                .user_summary
                .iter()
                .map(|u| {
                    if u.len() != self.n_frames {
                        return Err(err(format!("user summary of length {}, expected {}", u.len(), self.n_frames)));
                    }
                    Ok(self.picks.iter().map(|&p| u[p] > 0.0).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            UserAnnotation::Masks(masks)
        } else if self.gtscore.len() == t {
            UserAnnotation::Scores(vec![self.gtscore])
        } else {
            return Err(err("neither user_summary nor a gtscore of matching length".into()));
        };

        let video = VideoRecord { id, fps_original, fps_sampled, features, shots, users };
        video.validate()?;
        Ok(video)
    }
}

/// Converts an archive JSON export into a dataset directory.
pub fn import_archive(
    json_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    name: &str,
    fps_original: f64,
    fps_sampled: f64,
) -> Result<Dataset> {
    let text = std::fs::read_to_string(json_path)?;
    let raw: BTreeMap<String, ArchiveVideo> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        offset: byte_offset(&text, e.line(), e.column()),
        msg: e.to_string(),
    })?;
    let videos = raw
        .into_iter()
        .map(|(id, v)| v.into_record(id, fps_original, fps_sampled))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset { name: name.to_string(), videos, splits: Vec::new() };
    save_dataset(out_dir, &dataset)?;
    Ok(dataset)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    before + column.saturating_sub(1)
}
