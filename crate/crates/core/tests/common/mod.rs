#![allow(dead_code)]

use fulltransnet::data_io::SynthConfig;
use fulltransnet::model::{FullTransNet, ModelConfig};
use fulltransnet::numerics::{finite_diff_check_sampled, GradCheckReport, Matrix, ParameterStore, Tape};
use fulltransnet::segmentation::Shot;
use fulltransnet::training::{build_targets, TrainConfig};
use fulltransnet::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<T: fulltransnet::Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::from_f64_lossy(rng.gen_range(-1.0..1.0)))
}

/// Random tiling of `[0, t)` into `n` nonempty shots.
pub fn random_shots(rng: &mut ChaCha8Rng, t: usize, n: usize) -> Vec<Shot> {
    let n = n.clamp(1, t);
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, t - 1, n - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut shots = Vec::with_capacity(n);
    let mut start = 0;
    for c in cuts.into_iter().chain(std::iter::once(t)) {
        shots.push(Shot::new(start, c));
        start = c;
    }
    shots
}

/// Local-global membership from first principles: both ends valid, and the
/// key within the half-window of the query or either end a shot's first,
/// middle or last frame.
pub fn lga_allows(m: usize, n: usize, valid: usize, window: usize, shots: &[Shot]) -> bool {
    if m >= valid || n >= valid {
        return false;
    }
    let is_global = |i: usize| shots.iter().any(|s| i == s.start || i == s.end - 1 || i == (s.start + s.end - 1) / 2);
    let half = window / 2;
    m.abs_diff(n) <= half || is_global(m) || is_global(n)
}

/// Dense masked multi-head attention in f64: every score is computed, then
/// disallowed pairs are dropped before the softmax. Rows with no allowed key
/// are zero.
pub fn dense_masked_attention<T: fulltransnet::Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    heads: usize,
    allowed: impl Fn(usize, usize) -> bool,
) -> Matrix<f64> {
    let d = q.cols();
    let dk = d / heads;
    let mut out = Matrix::zeros(q.rows(), d);
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        for m in 0..q.rows() {
            let scores: Vec<Option<f64>> = (0..k.rows())
                .map(|n| {
                    let s: f64 = cols
                        .clone()
                        .map(|c| q.get(m, c).to_f64_lossy() * k.get(n, c).to_f64_lossy())
                        .sum::<f64>()
                        / (dk as f64).sqrt();
                    allowed(m, n).then_some(s)
                })
                .collect();
            let max = scores.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let z: f64 = scores.iter().flatten().map(|s| (s - max).exp()).sum();
            for (n, s) in scores.iter().enumerate() {
                if let Some(s) = s {
                    let w = (s - max).exp() / z;
                    for c in cols.clone() {
                        let cur = out.get(m, c);
                        out.set(m, c, cur + w * v.get(n, c).to_f64_lossy());
                    }
                }
            }
        }
    }
    out
}

/// The 2-layer, width-16, 2-head model of the gradient criterion.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        layers: 2,
        d_model: 16,
        d_ff: 32,
        heads: 2,
        window: 5,
        input_dim: 8,
        max_len: 32,
        seed: 11,
        ..ModelConfig::default()
    }
}

/// Teacher-forced loss of `net` on one video; with `grads`, also leaves the
/// analytic gradients in that store.
pub fn teacher_forced_loss(
    net: &FullTransNet,
    features: &Matrix<f64>,
    shots: &[Shot],
    summary: &[usize],
    store: &ParameterStore<f64>,
    grads: Option<&mut ParameterStore<f64>>,
) -> Result<f64> {
    let t = features.rows();
    let mut tape = Tape::new();
    let trace = net.forward_on(&mut tape, store, features, t, shots, summary)?;
    let y = build_targets(summary, t)?.to_matrix();
    let loss = tape.bce(trace.decoder.probs, y, 1.0 / t as f64)?;
    if let Some(target) = grads {
        target.zero_grads();
        tape.backward(loss)?.accumulate_into(target)?;
    }
    Ok(tape.scalar(loss))
}

/// Central differences on `entries` sampled parameters of the toy model
/// (T = 24, summary of 4 frames), in f64.
pub fn toy_gradient_report(entries: usize, seed: u64) -> GradCheckReport {
    let net = FullTransNet::new(toy_config()).unwrap();
    let mut r = rng(seed);
    let features = random_matrix(&mut r, 24, 8);
    let shots = random_shots(&mut r, 24, 3);
    let summary = [3, 4, 11, 20];
    let mut store = net.init_params::<f64>().unwrap();
    // biases and norm parameters start at 0/1; perturb them so every path
    // carries a generic signal
    for id in 0..store.len() {
        let name = store.name(id).to_string();
        if name.ends_with(".gain") || name.ends_with(".bias") || name.contains(".b") {
            for v in store.value_mut(id).data_mut() {
                *v += r.gen_range(-0.2..0.2);
            }
        }
    }
    let mut analytic = store.clone();
    teacher_forced_loss(&net, &features, &shots, &summary, &store, Some(&mut analytic)).unwrap();
    finite_diff_check_sampled(
        |p| teacher_forced_loss(&net, &features, &shots, &summary, p, None),
        &analytic,
        1e-5,
        1e-4,
        entries,
        seed,
    )
    .unwrap()
}

/// Synthetic dataset of the learning-signal criterion.
pub fn learning_synth() -> SynthConfig {
    SynthConfig { n_videos: 20, min_frames: 80, max_frames: 160, dim: 64, planted_fraction: 0.15, offset: 6.0, seed: 0, ..SynthConfig::default() }
}

/// Desk-scale model of the learning-signal criterion.
pub fn learning_model() -> ModelConfig {
    ModelConfig {
        layers: 1,
        d_model: 32,
        d_ff: 64,
        heads: 4,
        window: 17,
        input_dim: 64,
        max_len: 160,
        seed: 0,
        ..ModelConfig::default()
    }
}

pub fn learning_train() -> TrainConfig {
    TrainConfig { epochs: 100, folds: 5, learning_rate: 1e-3, shot_order_views: 8, seed: 0, ..TrainConfig::default() }
}
