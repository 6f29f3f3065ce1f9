//! Encoder cost per attention pattern: exact FLOP counts, median wall-clock
//! and high-water attention buffer memory.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{count_score_flops, meter, PatternKind, SparsityPattern};
use crate::error::{Error, Result};
use crate::model::{FullTransNet, ModelConfig};
use crate::numerics::Matrix;
use crate::segmentation::Shot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed encoder passes per point; the median is reported.
    pub repeats: usize,
    /// Equal-length shots per sequence, independent of its length.
    pub shots: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { repeats: 5, shots: 15, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pattern: PatternKind,
    pub seq_len: usize,
    /// Score multiply-accumulates over all encoder layers and heads.
    pub score_flops: u64,
    /// Multiply-accumulates of the whole encoder pass.
    pub forward_flops: u64,
    pub seconds: f64,
    pub peak_bytes: usize,
}

/// `n` frames split into `k` near-equal shots.
pub fn even_shots(n: usize, k: usize) -> Vec<Shot> {
    let k = k.clamp(1, n.max(1));
    (0..k).map(|i| Shot::new(i * n / k, (i + 1) * n / k)).collect()
}

/// Encoder work for one pattern: embedding, four projections, scores,
/// weighted values and the feed-forward block per layer.
pub fn encoder_flops(config: &ModelConfig, pattern: &SparsityPattern) -> u64 {
    let t = pattern.valid_len() as u64;
    let d = config.d_model as u64;
    let pairs = pattern.n_pairs() as u64;
    let per_layer = 4 * t * d * d + 2 * pairs * d + 2 * t * d * config.d_ff as u64;
    t * config.input_dim as u64 * d + config.layers as u64 * per_layer
}

/// Benchmarks one pattern at one length.
pub fn bench_pattern(config: &ModelConfig, kind: PatternKind, seq_len: usize, bench: &BenchConfig) -> Result<BenchReport> {
    if bench.repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let cfg = ModelConfig {
        pattern: kind,
        max_len: config.max_len.max(seq_len),
        ..config.clone()
    };
    let net = FullTransNet::new(cfg.clone())?;
    let store = net.init_params::<f32>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(bench.seed);
    let features = Matrix::from_fn(seq_len, cfg.input_dim, |_, _| rng.gen_range(-1.0f32..1.0));
    let shots = even_shots(seq_len, bench.shots);
    let pattern = net.pattern(seq_len, seq_len, &shots)?;

    let mut times = Vec::with_capacity(bench.repeats);
    meter::reset_peak();
    let base = meter::current_bytes();
    for _ in 0..bench.repeats {
        let start = Instant::now();
        let encoded = net.encode(&store, &features, seq_len, &shots)?;
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(&encoded);
    }
    let peak_bytes = meter::peak_bytes().saturating_sub(base);
    times.sort_by(f64::total_cmp);

    Ok(BenchReport {
        pattern: kind,
        seq_len,
        score_flops: count_score_flops(&pattern, cfg.head_dim()) * (cfg.heads * cfg.layers) as u64,
        forward_flops: encoder_flops(&cfg, &pattern),
        seconds: times[times.len() / 2],
        peak_bytes,
    })
}

/// Every pattern at every length, pattern-major.
pub fn bench(config: &ModelConfig, patterns: &[PatternKind], lengths: &[usize], bench: &BenchConfig) -> Result<Vec<BenchReport>> {
    let mut out = Vec::with_capacity(patterns.len() * lengths.len());
    for &p in patterns {
        for &n in lengths {
            out.push(bench_pattern(config, p, n, bench)?);
        }
    }
    Ok(out)
}

pub fn reports_to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from("pattern,seq_len,score_gflops,forward_gflops,runtime_s,memory_gb\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.pattern.tag(),
            r.seq_len,
            r.score_flops as f64 * 1e-9,
            r.forward_flops as f64 * 1e-9,
            r.seconds,
            r.peak_bytes as f64 * 1e-9
        );
    }
    out
}

pub fn reports_to_table(reports: &[BenchReport]) -> String {
    let mut out = format!(
        "{:<8} {:>7} {:>14} {:>16} {:>12} {:>12}\n",
        "pattern", "length", "FLOPs (G)", "fwd FLOPs (G)", "Runtime (s)", "Memory (GB)"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>14.6} {:>16.6} {:>12.6} {:>12.6}",
            r.pattern.tag(),
            r.seq_len,
            r.score_flops as f64 * 1e-9,
            r.forward_flops as f64 * 1e-9,
            r.seconds,
            r.peak_bytes as f64 * 1e-9
        );
    }
    out
}
