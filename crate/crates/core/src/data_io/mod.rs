//! Dataset files, loaders and the synthetic generator.
//!
//! A dataset directory holds `manifest.toml` plus, per video, a binary
//! feature file and a TOML annotation file:
//!
//! * features: `FTNF`, `u32` version (1), `u32` frames, `u32` dim, then
//!   row-major little-endian `f32` values;
//! * annotation: `id`, `fps_original`, `fps_sampled`, optional `shots` as
//!   `[start, end)` pairs, and either `user_scores` (one real curve per user)
//!   or `user_masks` (one 0/1 vector per user).

pub mod archive;
pub(crate) mod binary;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::segmentation::{Shot, ShotList, ShotSource};
use binary::{count_u32, put_f32s, put_u32, ByteReader};

pub use archive::{import_archive, ArchiveVideo};
pub use synth::{oracle_selector, synth_dataset, SynthConfig, SynthDataset};

pub const FEATURE_MAGIC: &[u8; 4] = b"FTNF";
pub const FEATURE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Per-user ground truth of one video.
#[derive(Clone, Debug, PartialEq)]
pub enum UserAnnotation {
    /// Frame-level importance curves.
    Scores(Vec<Vec<f64>>),
    /// Binary key-shot or keyframe selections.
    Masks(Vec<Vec<bool>>),
}

impl UserAnnotation {
    pub fn n_users(&self) -> usize {
        match self {
            UserAnnotation::Scores(s) => s.len(),
            UserAnnotation::Masks(m) => m.len(),
        }
    }

    fn lengths(&self) -> Vec<usize> {
        match self {
            UserAnnotation::Scores(s) => s.iter().map(Vec::len).collect(),
            UserAnnotation::Masks(m) => m.iter().map(Vec::len).collect(),
        }
    }
}

/// One video: features at the sampled frame rate plus annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub fps_original: f64,
    pub fps_sampled: f64,
    /// `T × D`.
    pub features: Matrix<f32>,
    pub shots: Option<ShotList>,
    pub users: UserAnnotation,
}

impl VideoRecord {
    pub fn valid_len(&self) -> usize {
        self.features.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.valid_len();
        if t == 0 {
            return Err(Error::Data(format!("video {} has no frames", self.id)));
        }
        if !self.features.is_finite() {
            return Err(Error::NonFinite(format!("features of video {}", self.id)));
        }
        if self.users.n_users() == 0 {
            return Err(Error::Data(format!("video {} has no user annotations", self.id)));
        }
        if let Some(bad) = self.users.lengths().into_iter().find(|&l| l != t) {
            return Err(Error::Data(format!(
                "video {}: user annotation of length {bad}, expected {t}",
                self.id
            )));
        }
        if let UserAnnotation::Scores(curves) = &self.users {
            if curves.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("user scores of video {}", self.id)));
            }
        }
        if let Some(shots) = &self.shots {
            crate::segmentation::check_tiling(shots.shots(), t)?;
        }
        Ok(())
    }
}

pub fn encode_features(features: &Matrix<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + 4 * features.len());
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_VERSION);
    put_u32(&mut out, count_u32(features.rows(), "frame count")?);
    put_u32(&mut out, count_u32(features.cols(), "feature width")?);
    put_f32s(&mut out, features.data().iter().copied());
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix<f32>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(FEATURE_MAGIC)?;
    let version = r.u32("version")?;
    if version != FEATURE_VERSION {
        return Err(Error::Parse { offset: 4, msg: format!("unsupported feature version {version}") });
    }
    let rows = r.u32("frame count")? as usize;
    let cols = r.u32("feature width")? as usize;
    let data = r.f32s(rows.saturating_mul(cols), "feature values")?;
    r.finish()?;
    Matrix::from_vec(rows, cols, data)
}

pub fn write_features(path: impl AsRef<Path>, features: &Matrix<f32>) -> Result<()> {
    std::fs::write(path, encode_features(features)?)?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    decode_features(&std::fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationFile {
    id: String,
    fps_original: f64,
    fps_sampled: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shots: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_scores: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_masks: Option<Vec<Vec<u8>>>,
}

fn toml_error(e: toml::de::Error) -> Error {
    Error::Parse {
        offset: e.span().map_or(0, |s| s.start),
        msg: e.message().to_string(),
    }
}

pub fn annotation_to_toml(video: &VideoRecord) -> String {
    let (user_scores, user_masks) = match &video.users {
        UserAnnotation::Scores(s) => (Some(s.clone()), None),
        UserAnnotation::Masks(m) => (
            None,
            Some(m.iter().map(|u| u.iter().map(|&b| b as u8).collect()).collect()),
        ),
    };
    let file = AnnotationFile {
        id: video.id.clone(),
        fps_original: video.fps_original,
        fps_sampled: video.fps_sampled,
        shots: video.shots.as_ref().map(|l| l.shots().iter().map(|s| [s.start, s.end]).collect()),
        user_scores,
        user_masks,
    };
    toml::to_string(&file).expect("annotation serializes")
}

/// Parses annotation text for a video with `valid_len` frames.
pub fn annotation_from_toml(
    text: &str,
    valid_len: usize,
) -> Result<(String, f64, f64, Option<ShotList>, UserAnnotation)> {
    let file: AnnotationFile = toml::from_str(text).map_err(toml_error)?;
    let users = match (file.user_scores, file.user_masks) {
        (Some(s), None) => UserAnnotation::Scores(s),
        (None, Some(m)) => {
            let mut masks = Vec::with_capacity(m.len());
            for (u, row) in m.into_iter().enumerate() {
                if let Some(bad) = row.iter().find(|&&v| v > 1) {
                    return Err(Error::Data(format!("user {u} mask holds {bad}; expected 0 or 1")));
                }
                masks.push(row.into_iter().map(|v| v == 1).collect());
            }
            UserAnnotation::Masks(masks)
        }
        _ => {
            return Err(Error::Data(
                "annotation needs exactly one of user_scores or user_masks".into(),
            ))
        }
    };
    let shots = match file.shots {
        Some(pairs) => Some(ShotList::new(
            pairs.iter().map(|p| Shot::new(p[0], p[1])).collect(),
            valid_len,
            ShotSource::Provided,
        )?),
        None => None,
    };
    Ok((file.id, file.fps_original, file.fps_sampled, shots, users))
}

/// Loads and validates one video.
pub fn load_video(feature_path: impl AsRef<Path>, annotation_path: impl AsRef<Path>) -> Result<VideoRecord> {
    let features = read_features(feature_path)?;
    let text = std::fs::read_to_string(annotation_path)?;
    let (id, fps_original, fps_sampled, shots, users) = annotation_from_toml(&text, features.rows())?;
    let video = VideoRecord { id, fps_original, fps_sampled, features, shots, users };
    video.validate()?;
    Ok(video)
}

pub fn save_video(dir: impl AsRef<Path>, video: &VideoRecord) -> Result<ManifestEntry> {
    let dir = dir.as_ref();
    let entry = ManifestEntry {
        id: video.id.clone(),
        features: format!("{}.ftnf", video.id),
        annotation: format!("{}.toml", video.id),
    };
    write_features(dir.join(&entry.features), &video.features)?;
    std::fs::write(dir.join(&entry.annotation), annotation_to_toml(video))?;
    Ok(entry)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Paths relative to the dataset directory.
    pub features: String,
    pub annotation: String,
}

/// Dataset index; `splits` optionally lists the held-out video ids of
/// each fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub splits: Vec<Vec<String>>,
    pub videos: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self, dir: &Path) -> Result<()> {
        let mut ids: Vec<&str> = self.videos.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("duplicate video id {}", w[0])));
        }
        for v in &self.videos {
            for f in [&v.features, &v.annotation] {
                if !dir.join(f).is_file() {
                    return Err(Error::Data(format!("video {}: missing file {f}", v.id)));
                }
            }
        }
        let mut held_out: Vec<&str> = Vec::new();
        for split in &self.splits {
            for id in split {
                if ids.binary_search(&id.as_str()).is_err() {
                    return Err(Error::Data(format!("split references unknown video {id}")));
                }
                held_out.push(id);
            }
        }
        held_out.sort_unstable();
        if let Some(w) = held_out.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("video {} is held out by more than one split", w[0])));
        }
        Ok(())
    }
}

/// Videos of one dataset plus optional fold assignments (indices into
/// `videos` of each fold's held-out set).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub videos: Vec<VideoRecord>,
    pub splits: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn find(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(toml_error)?;
    manifest.validate(dir)?;
    let videos = manifest
        .videos
        .iter()
        .map(|e| {
            let v = load_video(dir.join(&e.features), dir.join(&e.annotation))?;
            if v.id != e.id {
                return Err(Error::Data(format!("manifest id {} but annotation id {}", e.id, v.id)));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = manifest
        .splits
        .iter()
        .map(|s| s.iter().map(|id| videos.iter().position(|v| &v.id == id).expect("validated")).collect())
        .collect();
    Ok(Dataset { name: manifest.name, videos, splits })
}

pub fn save_dataset(dir: impl AsRef<Path>, dataset: &Dataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let videos = dataset.videos.iter().map(|v| save_video(dir, v)).collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        splits: dataset
            .splits
            .iter()
            .map(|s| s.iter().map(|&i| dataset.videos[i].id.clone()).collect())
            .collect(),
        videos,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, toml::to_string(&manifest).expect("manifest serializes"))?;
    Ok(path)
}
