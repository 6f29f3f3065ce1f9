//! Seeded synthetic videos with a planted summary.
//!
//! Each shot gets its own Gaussian cluster center orthogonal to a hidden unit
//! direction `u`. Frames of the planted shots are shifted by `offset * u`, so
//! a threshold on the projection onto `u` recovers them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data_io::{Dataset, UserAnnotation, VideoRecord};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::segmentation::{Shot, ShotList, ShotSource};
use crate::selection::budget_frames;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_videos: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub dim: usize,
    pub min_shots: usize,
    pub max_shots: usize,
    pub planted_fraction: f64,
    /// Length of the planted shift along the hidden direction.
    pub offset: f64,
    /// Per-coordinate frame noise around the shot center.
    pub noise: f64,
    /// Shot boundaries move up to this fraction of the mean shot length
    /// away from an even split.
    pub shot_jitter: f64,
    pub n_users: usize,
    pub user_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_videos: 20,
            min_frames: 80,
            max_frames: 160,
            dim: 64,
            min_shots: 6,
            max_shots: 14,
            planted_fraction: 0.15,
            offset: 3.0,
            noise: 0.3,
            shot_jitter: 0.3,
            n_users: 5,
            user_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        Error::check_seed(self.seed)?;
        if !(self.planted_fraction > 0.0 && self.planted_fraction < 1.0) {
            return fail("planted_fraction must lie in (0, 1)");
        }
        if self.min_frames < 2 || self.min_frames > self.max_frames {
            return fail("frame range must satisfy 2 <= min_frames <= max_frames");
        }
        if self.min_shots < 1 || self.min_shots > self.max_shots || self.max_shots > self.min_frames {
            return fail("shot range must satisfy 1 <= min_shots <= max_shots <= min_frames");
        }
        if !(0.0..0.5).contains(&self.shot_jitter) {
            return fail("shot_jitter must lie in [0, 0.5)");
        }
        if self.dim < 2 || self.n_users == 0 {
            return fail("dim must be >= 2 and n_users >= 1");
        }
        Ok(())
    }
}

/// Generated dataset plus the ground truth of its construction.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// Per video, frames belonging to planted shots.
    pub planted: Vec<Vec<bool>>,
    /// Hidden unit direction carrying the planted offset.
    pub direction: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut direction = gaussian(&mut rng, cfg.dim);
    let norm = dot(&direction, &direction).sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    let mut videos = Vec::with_capacity(cfg.n_videos);
    let mut planted_masks = Vec::with_capacity(cfg.n_videos);
    for v in 0..cfg.n_videos {
        let t = rng.gen_range(cfg.min_frames..=cfg.max_frames);
        let budget = budget_frames(cfg.planted_fraction, t);
        let (shots, planted) = loop {
            let n_shots = rng.gen_range(cfg.min_shots..=cfg.max_shots);
            let cuts = jittered_cuts(&mut rng, t, n_shots, cfg.shot_jitter);
            let shots = ShotList::from_change_points(&cuts, t, ShotSource::Provided)?;
            let mut order: Vec<usize> = (0..shots.len()).collect();
            order.shuffle(&mut rng);
            let mut used = 0;
            let mut planted = vec![false; shots.len()];
            for s in order {
                let len = shots.shots()[s].len();
                if used + len <= budget {
                    planted[s] = true;
                    used += len;
                }
            }
            if used > 0 {
                break (shots, planted);
            }
        };

        let mut frame_planted = vec![false; t];
        let mut data = Vec::with_capacity(t * cfg.dim);
        for (s, shot) in shots.shots().iter().enumerate() {
            let mut center = gaussian(&mut rng, cfg.dim);
            let along = dot(&center, &direction);
            center.iter_mut().zip(&direction).for_each(|(c, u)| *c -= along * u);
            for f in shot.frames() {
                frame_planted[f] = planted[s];
                let shift = if planted[s] { cfg.offset } else { 0.0 };
                for (c, u) in center.iter().zip(&direction) {
                    let n: f64 = rng.sample(StandardNormal);
                    data.push((c + cfg.noise * n + shift * u) as f32);
                }
            }
        }

        let users = (0..cfg.n_users)
            .map(|_| {
                frame_planted
                    .iter()
                    .map(|&p| {
                        // disagreement only among planted frames: positive
                        // scores elsewhere would pull filler shots into every
                        // user's knapsack summary
                        if p {
                            let e: f64 = rng.sample::<f64, _>(StandardNormal).abs() * cfg.user_noise;
                            (1.0 - e).max(0.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();

        videos.push(VideoRecord {
            id: format!("synth_{v:03}"),
            fps_original: 30.0,
            fps_sampled: 2.0,
            features: Matrix::from_vec(t, cfg.dim, data)?,
            shots: Some(shots),
            users: UserAnnotation::Scores(users),
        });
        planted_masks.push(frame_planted);
    }

    Ok(SynthDataset {
        dataset: Dataset { name: "synthetic".into(), videos, splits: Vec::new() },
        planted: planted_masks,
        direction,
    })
}

/// `n - 1` increasing cut points near `i * t / n`, each moved by at most
/// `jitter` of the mean shot length, so every shot is nonempty.
fn jittered_cuts(rng: &mut ChaCha8Rng, t: usize, n: usize, jitter: f64) -> Vec<usize> {
    let mean = t as f64 / n as f64;
    (1..n)
        .map(|i| {
            let j = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            ((i as f64 + j) * mean).round() as usize
        })
        .collect()
}

/// Marks frames whose projection onto `direction` exceeds `threshold`.
pub fn oracle_selector(features: &Matrix<f32>, direction: &[f64], threshold: f64) -> Vec<bool> {
    (0..features.rows())
        .map(|r| {
            let p: f64 = features.row(r).iter().zip(direction).map(|(&x, u)| x as f64 * u).sum();
            p > threshold
        })
        .collect()
}

/// Planted shots of a generated video as frame ranges.
pub fn planted_shots(shots: &ShotList, planted: &[bool]) -> Vec<Shot> {
    shots.shots().iter().copied().filter(|s| planted[s.start]).collect()
}
