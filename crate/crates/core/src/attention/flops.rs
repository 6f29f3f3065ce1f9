//! Exact work counts for the attention score computation.

use crate::attention::SparsityPattern;

/// Number of (query, key) score entries the pattern requires.
pub fn count_score_pairs(pattern: &SparsityPattern) -> u64 {
    pattern.n_pairs() as u64
}

/// Multiply-accumulates needed to form every allowed score: one `d_k`-long
/// dot product per allowed pair, per head.
pub fn count_score_flops(pattern: &SparsityPattern, d_k: usize) -> u64 {
    count_score_pairs(pattern) * d_k as u64
}
