//! Teacher-forced training with cross-validation folds.

pub mod adam;
pub mod ground_truth;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_multi_user, f_measure, EvalReport, UserAggregation, VideoEval};
use crate::model::{DecoderSource, FullTransNet, ModelConfig};
use crate::numerics::tape::bce_value;
use crate::numerics::{Matrix, ParameterStore, Tape};
use crate::scalar::Scalar;
use crate::segmentation::{Shot, ShotList};
use crate::selection::{make_summary, SummaryResult};

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use ground_truth::{
    default_aggregation, gt_summary, mask_frames, mean_user_scores, user_reference_masks, video_shots, KtsParams,
};

/// How the per-frame labels are laid over the `L × T` output grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetLayout {
    /// Row `l` is one-hot at the `l`-th summary frame.
    #[default]
    Grid,
    /// Every row is the full keyframe indicator.
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// First-moment decay (the optimizer's momentum).
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub folds: usize,
    pub seed: u64,
    pub budget_ratio: f64,
    pub target: TargetLayout,
    pub kts_max_shots: usize,
    pub kts_penalty: f64,
    /// Held-out evaluation period in epochs; 0 evaluates after the last epoch only.
    pub eval_every: usize,
    /// Overrides the per-annotation default (max for masks, mean for scores).
    pub aggregation: Option<UserAggregation>,
    /// Shot-order augmentation: when positive, every epoch presents each
    /// training video this many times, each with its shots in a fresh random
    /// order (labels travel with their frames). Zero trains on the videos as
    /// given.
    pub shot_order_views: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            grad_clip: 5.0,
            batch_size: 1,
            folds: 5,
            seed: 0,
            budget_ratio: crate::selection::DEFAULT_BUDGET_RATIO,
            target: TargetLayout::Grid,
            kts_max_shots: 20,
            kts_penalty: 1.0,
            eval_every: 0,
            aggregation: None,
            shot_order_views: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        Error::check_seed(self.seed)?;
        if self.epochs == 0 || self.folds == 0 || self.kts_max_shots == 0 {
            return fail("epochs, folds and kts_max_shots must be positive".into());
        }
        if self.batch_size != 1 {
            return fail(format!("only batch_size 1 is supported, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0) || !(self.eps > 0.0) || self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return fail("learning_rate and eps must be positive; weight_decay and grad_clip nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.budget_ratio > 0.0 && self.budget_ratio <= 1.0) {
            return fail(format!("budget_ratio must lie in (0, 1], got {}", self.budget_ratio));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn kts(&self) -> KtsParams {
        KtsParams { max_shots: self.kts_max_shots, penalty: self.kts_penalty }
    }
}

/// Labels for the `L × T` output grid, derived from the ground-truth frames.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetGrid {
    pub frames: Vec<usize>,
    pub n_frames: usize,
    pub layout: TargetLayout,
}

impl TargetGrid {
    pub fn rows(&self) -> usize {
        self.frames.len()
    }

    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut y = Matrix::zeros(self.frames.len(), self.n_frames);
        for (l, &f) in self.frames.iter().enumerate() {
            match self.layout {
                TargetLayout::Grid => y.set(l, f, T::one()),
                TargetLayout::Broadcast => {
                    for &g in &self.frames {
                        y.set(l, g, T::one());
                    }
                }
            }
        }
        y
    }
}

/// One-hot target rows for sorted, distinct summary frames.
pub fn build_targets(summary: &[usize], n_frames: usize) -> Result<TargetGrid> {
    build_targets_with(summary, n_frames, TargetLayout::Grid)
}

pub fn build_targets_with(summary: &[usize], n_frames: usize, layout: TargetLayout) -> Result<TargetGrid> {
    if let Some(w) = summary.windows(2).find(|w| w[0] >= w[1]) {
        let msg = if w[0] == w[1] { "duplicate" } else { "unsorted" };
        return Err(Error::Precondition(format!("{msg} summary frame {}", w[1])));
    }
    if let Some(&f) = summary.iter().find(|&&f| f >= n_frames) {
        return Err(Error::Precondition(format!("summary frame {f} outside {n_frames} frames")));
    }
    Ok(TargetGrid { frames: summary.to_vec(), n_frames, layout })
}

/// `-(1/T) Σ [y ln p + (1 - y) ln(1 - p)]` over every grid entry, with `p`
/// clamped away from 0 and 1.
pub fn bce_loss<T: Scalar>(p: &Matrix<T>, y: &Matrix<T>, n_frames: usize) -> Result<f64> {
    if p.shape() != y.shape() {
        return Err(Error::dims("bce_loss", p.shape(), y.shape()));
    }
    Ok(bce_value(p, y, T::one() / T::from_count(n_frames)).to_f64_lossy())
}

/// A video with its shots, ground truth and reference masks resolved.
#[derive(Clone, Debug)]
pub struct PreparedVideo<T: Scalar> {
    pub id: String,
    pub features: Matrix<T>,
    pub shots: ShotList,
    /// Ground-truth summary frames (the teacher sequence).
    pub summary: Vec<usize>,
    pub references: Vec<Vec<bool>>,
    pub aggregation: UserAggregation,
}

impl<T: Scalar> PreparedVideo<T> {
    pub fn valid_len(&self) -> usize {
        self.features.rows()
    }
}

pub fn prepare_dataset<T: Scalar>(dataset: &Dataset, cfg: &TrainConfig) -> Result<Vec<PreparedVideo<T>>> {
    dataset
        .videos
        .iter()
        .map(|v| {
            v.validate()?;
            let shots = video_shots(v, cfg.kts())?;
            let gt = gt_summary(v, &shots, cfg.budget_ratio)?;
            let summary = mask_frames(&gt.keyframe_mask);
            if summary.is_empty() {
                return Err(Error::Data(format!("video {}: empty ground-truth summary", v.id)));
            }
            Ok(PreparedVideo {
                id: v.id.clone(),
                features: v.features.cast(),
                references: user_reference_masks(v, &shots, cfg.budget_ratio)?,
                aggregation: cfg.aggregation.unwrap_or_else(|| default_aggregation(&v.users)),
                shots,
                summary,
            })
        })
        .collect()
}

/// The video with its shots reordered by `order`; features, summary and
/// reference masks move with their frames.
pub fn reorder_shots<T: Scalar>(video: &PreparedVideo<T>, order: &[usize]) -> Result<PreparedVideo<T>> {
    let shots = video.shots.shots();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..shots.len()).collect::<Vec<_>>() {
        return Err(Error::Precondition(format!("shot order is not a permutation of 0..{}", shots.len())));
    }
    // new position -> old frame
    let source: Vec<usize> = order.iter().flat_map(|&s| shots[s].frames()).collect();
    let mut new_shots = Vec::with_capacity(shots.len());
    let mut start = 0;
    for &s in order {
        new_shots.push(Shot::new(start, start + shots[s].len()));
        start += shots[s].len();
    }
    let mut in_summary = vec![false; source.len()];
    video.summary.iter().for_each(|&f| in_summary[f] = true);
    let cols = video.features.cols();
    Ok(PreparedVideo {
        id: video.id.clone(),
        features: Matrix::from_fn(source.len(), cols, |r, c| video.features.get(source[r], c)),
        shots: ShotList::new(new_shots, source.len(), video.shots.source())?,
        summary: (0..source.len()).filter(|&i| in_summary[source[i]]).collect(),
        references: video.references.iter().map(|m| source.iter().map(|&f| m[f]).collect()).collect(),
        aggregation: video.aggregation,
    })
}

/// Held-out index sets: the dataset's own splits when present, otherwise
/// `k` disjoint folds of a seeded shuffle.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Data("empty dataset".into()));
    }
    let k = k.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, v) in order.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Loss and provenance of one optimization step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
    pub source: DecoderSource,
}

/// One teacher-forced step on one video.
pub fn train_step<T: Scalar>(
    net: &FullTransNet,
    store: &mut ParameterStore<T>,
    adam: &mut Adam<T>,
    video: &PreparedVideo<T>,
    cfg: &TrainConfig,
) -> Result<StepOutcome> {
    let t = video.valid_len();
    let targets = build_targets_with(&video.summary, t, cfg.target)?;
    store.zero_grads();
    let mut tape = Tape::new();
    let trace = net.forward_on(&mut tape, store, &video.features, t, video.shots.shots(), &video.summary)?;
    let loss = tape.bce(trace.decoder.probs, targets.to_matrix(), T::one() / T::from_count(t))?;
    let loss_value = tape.scalar(loss).to_f64_lossy();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite(format!("loss on video {}", video.id)));
    }
    tape.backward(loss)?.accumulate_into(store)?;
    let grad_norm = clip_grad_norm(store, cfg.grad_clip);
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient on video {}", video.id)));
    }
    adam.step(store)?;
    Ok(StepOutcome { loss: loss_value, grad_norm, source: trace.source })
}

/// Free-running summary of one video.
pub fn summarize<T: Scalar>(
    net: &FullTransNet,
    store: &ParameterStore<T>,
    features: &Matrix<T>,
    shots: &ShotList,
    budget_ratio: f64,
) -> Result<SummaryResult> {
    let t = features.rows();
    let encoded = net.encode(store, features, t, shots.shots())?;
    let scores = net.decode_autoregressive(store, &encoded)?;
    make_summary(&scores, shots.shots(), budget_ratio)
}

/// Summaries and their evaluation for a set of prepared videos.
pub fn evaluate_videos<T: Scalar>(
    net: &FullTransNet,
    store: &ParameterStore<T>,
    videos: &[&PreparedVideo<T>],
    budget_ratio: f64,
) -> Result<(EvalReport, Vec<SummaryResult>)> {
    let mut report = EvalReport::default();
    let mut summaries = Vec::with_capacity(videos.len());
    for v in videos {
        let s = summarize(net, store, &v.features, &v.shots, budget_ratio)?;
        let mut e: VideoEval = evaluate_multi_user(&s.keyframe_mask, &v.references, v.aggregation)?;
        e.id = v.id.clone();
        report.videos.push(e);
        summaries.push(s);
    }
    Ok((report, summaries))
}

/// Mean F-measure of random frame scores pushed through the same shots,
/// budget and references (`draws` samples per video).
pub fn random_baseline<T: Scalar>(videos: &[&PreparedVideo<T>], budget_ratio: f64, draws: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for v in videos {
        let mut acc = 0.0;
        for _ in 0..draws {
            let scores: Vec<f64> = (0..v.valid_len()).map(|_| rng.gen::<f64>()).collect();
            let s = make_summary(&scores, v.shots.shots(), budget_ratio)?;
            acc += evaluate_multi_user(&s.keyframe_mask, &v.references, v.aggregation)?.aggregate.f_measure;
        }
        total += acc / draws as f64;
    }
    Ok(total / videos.len().max(1) as f64)
}

/// F-measure of the ground-truth summary against the references: the
/// ceiling a perfect predictor of the teacher sequence would reach.
pub fn teacher_f_measure<T: Scalar>(video: &PreparedVideo<T>) -> Result<f64> {
    let mut mask = vec![false; video.valid_len()];
    video.summary.iter().for_each(|&f| mask[f] = true);
    let per_user = video.references.iter().map(|r| f_measure(&mask, r)).collect::<Result<Vec<_>>>()?;
    Ok(match video.aggregation {
        UserAggregation::Max => per_user.iter().map(|p| p.f_measure).fold(0.0, f64::max),
        UserAggregation::Mean => per_user.iter().map(|p| p.f_measure).sum::<f64>() / per_user.len() as f64,
    })
}

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub split: usize,
    pub loss: f64,
    pub f_measure: Option<f64>,
}

pub fn loss_log_csv(records: &[LossRecord]) -> String {
    let mut out = String::from("epoch,split,loss,f_measure\n");
    for r in records {
        let f = r.f_measure.map(|f| format!("{f:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{:.9},{f}", r.epoch, r.split, r.loss);
    }
    out
}

/// Result of training and evaluating one fold.
#[derive(Clone, Debug)]
pub struct FoldResult<T: Scalar> {
    pub split: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub store: ParameterStore<T>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub eval: EvalReport,
    pub summaries: Vec<SummaryResult>,
    pub baseline_f: f64,
    /// Every step's decoder inputs came from the ground truth.
    pub teacher_forced: bool,
}

/// Trains one fold from fresh parameters.
pub fn train_fold<T: Scalar>(
    net: &FullTransNet,
    cfg: &TrainConfig,
    videos: &[PreparedVideo<T>],
    split: usize,
    test: &[usize],
    log: &mut Vec<LossRecord>,
) -> Result<FoldResult<T>> {
    let train: Vec<usize> = (0..videos.len()).filter(|i| !test.contains(i)).collect();
    if train.is_empty() {
        return Err(Error::Data(format!("split {split} has no training videos")));
    }
    let mut store = net.init_params::<T>()?;
    let mut adam = Adam::new(cfg.adam(), &store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (split as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let test_refs: Vec<&PreparedVideo<T>> = test.iter().map(|&i| &videos[i]).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut teacher_forced = true;
    let mut order = train.clone();
    let mut last_eval = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for _ in 0..cfg.shot_order_views.max(1) {
            for &i in &order {
                let step = if cfg.shot_order_views > 0 {
                    let mut shot_order: Vec<usize> = (0..videos[i].shots.len()).collect();
                    shot_order.shuffle(&mut rng);
                    train_step(net, &mut store, &mut adam, &reorder_shots(&videos[i], &shot_order)?, cfg)?
                } else {
                    train_step(net, &mut store, &mut adam, &videos[i], cfg)?
                };
                teacher_forced &= step.source == DecoderSource::GroundTruth;
                sum += step.loss;
                steps += 1;
            }
            order.shuffle(&mut rng);
        }
        let loss = sum / steps as f64;
        losses.push(loss);
        let evaluate = !test.is_empty() && (epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0));
        let f = if evaluate {
            let r = evaluate_videos(net, &store, &test_refs, cfg.budget_ratio)?;
            let f = r.0.mean_f();
            last_eval = Some(r);
            Some(f)
        } else {
            None
        };
        log.push(LossRecord { epoch, split, loss, f_measure: f });
    }

    let (eval, summaries) = last_eval.unwrap_or_default();
    let baseline_f = random_baseline(&test_refs, cfg.budget_ratio, 1000, cfg.seed.wrapping_add(split as u64))?;
    Ok(FoldResult { split, train, test: test.to_vec(), store, losses, eval, summaries, baseline_f, teacher_forced })
}

/// Full cross-validated training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub folds: Vec<FoldResult<T>>,
    pub log: Vec<LossRecord>,
}

impl<T: Scalar> TrainOutcome<T> {
    /// Mean held-out F over folds.
    pub fn mean_f(&self) -> f64 {
        self.folds.iter().map(|f| f.eval.mean_f()).sum::<f64>() / self.folds.len().max(1) as f64
    }
}

pub fn train<T: Scalar>(dataset: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if dataset.videos.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let longest = dataset.videos.iter().map(|v| v.valid_len()).max().unwrap_or(0);
    if longest > model.max_len {
        return Err(Error::Config(format!("video of {longest} frames exceeds max_len {}", model.max_len)));
    }
    let net = FullTransNet::new(model.clone())?;
    let videos = prepare_dataset::<T>(dataset, cfg)?;
    let folds = if dataset.splits.is_empty() {
        make_folds(videos.len(), cfg.folds, cfg.seed)?
    } else {
        dataset.splits.clone()
    };
    let mut log = Vec::new();
    let results = folds
        .iter()
        .enumerate()
        .map(|(split, test)| train_fold(&net, cfg, &videos, split, test, &mut log))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainOutcome { folds: results, log })
}
