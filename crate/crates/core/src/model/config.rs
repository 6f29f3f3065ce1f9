use serde::{Deserialize, Serialize};

use crate::attention::{GlobalsPerShot, PatternKind};
use crate::error::{Error, Result};

/// How per-step output distributions are folded into one score per frame
/// during free-running decoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepAggregation {
    #[default]
    Max,
    Mean,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder layers; the decoder has the same count.
    pub layers: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub heads: usize,
    /// Local attention window (odd).
    pub window: usize,
    /// Width of the raw per-frame features.
    pub input_dim: usize,
    /// Padded sequence length; also the output head width.
    pub max_len: usize,
    pub seed: u64,
    /// Encoder attention pattern.
    pub pattern: PatternKind,
    /// Global tokens per shot (first / +middle / +last).
    pub globals_per_shot: u8,
    /// Free-running decode length as a fraction of the video length.
    pub decode_ratio: f64,
    pub step_aggregation: StepAggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 6,
            d_model: 64,
            d_ff: 2048,
            heads: 8,
            window: 17,
            input_dim: 1024,
            max_len: 1536,
            seed: 0,
            pattern: PatternKind::LocalGlobal,
            globals_per_shot: 3,
            decode_ratio: 0.15,
            step_aggregation: StepAggregation::Max,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        Error::check_seed(self.seed)?;
        if self.layers == 0 {
            return fail("layers must be >= 1".into());
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!("d_model {} is not divisible by {} heads", self.d_model, self.heads));
        }
        if self.d_ff == 0 || self.input_dim == 0 || self.max_len == 0 {
            return fail("d_ff, input_dim and max_len must be positive".into());
        }
        if self.window == 0 || self.window % 2 == 0 {
            return fail(format!("window must be odd and >= 1, got {}", self.window));
        }
        if matches!(self.pattern, PatternKind::Causal | PatternKind::Cross) {
            return fail(format!("{} is not an encoder pattern", self.pattern.tag()));
        }
        GlobalsPerShot::new(self.globals_per_shot)?;
        if !(self.decode_ratio > 0.0 && self.decode_ratio <= 1.0) {
            return fail(format!("decode_ratio must lie in (0, 1], got {}", self.decode_ratio));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn globals(&self) -> GlobalsPerShot {
        GlobalsPerShot::new(self.globals_per_shot).unwrap_or_default()
    }

    /// Number of free-running decode steps for a video of `valid_len` frames.
    pub fn decode_steps(&self, valid_len: usize) -> usize {
        ((self.decode_ratio * valid_len as f64 - 1e-9).ceil() as usize).clamp(1, valid_len.max(1))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Names of the fields whose values differ between two configurations.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let a = toml::Value::try_from(self).expect("serializable");
        let b = toml::Value::try_from(other).expect("serializable");
        let (Some(a), Some(b)) = (a.as_table(), b.as_table()) else {
            return Vec::new();
        };
        let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| a.get(*k) != b.get(*k))
            .map(|k| k.to_string())
            .collect()
    }
}
