//! Local-global sparse attention and the multi-head wrappers built on it.

pub mod export;
pub mod flops;
pub mod kernel;
pub mod meter;
pub mod multihead;
pub mod pattern;

pub use flops::{count_score_flops, count_score_pairs};
pub use kernel::{attend, dense_weights, scaled_scores, sparse_attention, AttentionOutput};
pub use multihead::{multi_head, AttentionNodes, MultiHeadAttention};
pub use pattern::{global_tokens, GlobalsPerShot, KeySet, PatternKind, SparsityPattern};

use crate::error::Result;
use crate::segmentation::Shot;

/// Local-global pattern for a padded sequence; see [`SparsityPattern::lga`].
pub fn build_lga_pattern(seq_len: usize, valid_len: usize, window: usize, shots: &[Shot]) -> Result<SparsityPattern> {
    SparsityPattern::lga(seq_len, valid_len, window, shots)
}
