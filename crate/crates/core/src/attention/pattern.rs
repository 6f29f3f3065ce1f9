//! Query→key connectivity for every attention flavour the model uses.
//!
//! Local-global (LGA) connectivity: query `m` sees the band
//! `[max(0, m - w/2), min(valid_len - 1, m + w/2)]` plus every global token,
//! and each global token sees every valid position. Global tokens are the
//! first, middle (`(start + end - 1) / 2`, floored) and last frame of each
//! shot. Positions at or beyond `valid_len` are padding and are connected
//! to nothing in either direction.
//!
//! Note: the band's upper end is clamped to `valid_len - 1`. Some write-ups
//! of this pattern bound it by `n - 1` with `n` the key index itself, which
//! reads as a typo for the sequence bound.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::Shot;

/// Which connectivity a pattern encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternKind {
    /// Every valid query sees every valid key.
    #[serde(rename = "fa", alias = "full")]
    Full,
    /// Window band only.
    #[serde(rename = "la", alias = "local")]
    Local,
    /// Self plus global rows/columns.
    #[serde(rename = "ga", alias = "global")]
    Global,
    /// Window band plus global rows/columns.
    #[serde(rename = "lga", alias = "localglobal")]
    LocalGlobal,
    /// Query `t` sees keys `0..=t`.
    #[serde(rename = "causal")]
    Causal,
    /// Rectangular full connectivity between two sequences.
    #[serde(rename = "cross")]
    Cross,
}

impl PatternKind {
    /// Short identifier used by the CLI and reports (`fa`, `la`, `ga`, `lga`).
    pub fn tag(self) -> &'static str {
        match self {
            PatternKind::Full => "fa",
            PatternKind::Local => "la",
            PatternKind::Global => "ga",
            PatternKind::LocalGlobal => "lga",
            PatternKind::Causal => "causal",
            PatternKind::Cross => "cross",
        }
    }

    /// Parses an encoder pattern tag.
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag.trim().to_ascii_lowercase().as_str() {
            "fa" | "full" => Ok(PatternKind::Full),
            "la" | "local" => Ok(PatternKind::Local),
            "ga" | "global" => Ok(PatternKind::Global),
            "lga" | "localglobal" | "local-global" => Ok(PatternKind::LocalGlobal),
            other => Err(Error::Config(format!(
                "unknown attention pattern `{other}` (expected fa, la, ga or lga)"
            ))),
        }
    }
}

/// Number of global tokens taken from each shot: first; first and middle;
/// first, middle and last.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GlobalsPerShot(u8);

impl GlobalsPerShot {
    pub const ALL: GlobalsPerShot = GlobalsPerShot(3);

    pub fn new(n: u8) -> Result<Self> {
        if (1..=3).contains(&n) {
            Ok(GlobalsPerShot(n))
        } else {
            Err(Error::Config(format!("globals per shot must be 1, 2 or 3, got {n}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for GlobalsPerShot {
    fn default() -> Self {
        Self::ALL
    }
}

/// Allowed keys of one query, in ascending order.
#[derive(Clone, Debug)]
pub enum KeySet<'a> {
    Range(Range<usize>),
    List(&'a [usize]),
}

impl<'a> KeySet<'a> {
    pub fn len(&self) -> usize {
        match self {
            KeySet::Range(r) => r.len(),
            KeySet::List(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, key: usize) -> bool {
        match self {
            KeySet::Range(r) => r.contains(&key),
            KeySet::List(l) => l.binary_search(&key).is_ok(),
        }
    }

    pub fn iter(&self) -> KeyIter<'a> {
        match self {
            KeySet::Range(r) => KeyIter::Range(r.clone()),
            KeySet::List(l) => KeyIter::List(l.iter()),
        }
    }
}

pub enum KeyIter<'a> {
    Range(Range<usize>),
    List(std::slice::Iter<'a, usize>),
}

impl Iterator for KeyIter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        match self {
            KeyIter::Range(r) => r.next(),
            KeyIter::List(l) => l.next().copied(),
        }
    }
}

/// Per-query allowed key sets.
///
/// Contiguous kinds (full, causal, cross, local) are stored implicitly; kinds
/// with global tokens keep a compressed row list so no dense `T × T` mask is
/// ever allocated.
#[derive(Clone, Debug)]
pub struct SparsityPattern {
    kind: PatternKind,
    n_queries: usize,
    n_keys: usize,
    valid_queries: usize,
    valid_keys: usize,
    window: usize,
    global_tokens: Vec<usize>,
    offsets: Vec<usize>,
    keys: Vec<usize>,
    n_pairs: usize,
}

impl SparsityPattern {
    /// Local-global pattern over a padded sequence of length `seq_len`.
    pub fn lga(seq_len: usize, valid_len: usize, window: usize, shots: &[Shot]) -> Result<Self> {
        Self::encoder(PatternKind::LocalGlobal, seq_len, valid_len, window, shots, GlobalsPerShot::ALL)
    }

    /// Any of the four encoder patterns (full, local, global, local-global).
    ///
    /// Shots must tile `[0, valid_len)`; they are validated for every kind so
    /// that ablations see identical preconditions.
    pub fn encoder(
        kind: PatternKind,
        seq_len: usize,
        valid_len: usize,
        window: usize,
        shots: &[Shot],
        globals_per_shot: GlobalsPerShot,
    ) -> Result<Self> {
        if window == 0 || window % 2 == 0 {
            return Err(Error::Config(format!("window must be odd and >= 1, got {window}")));
        }
        if valid_len > seq_len {
            return Err(Error::Precondition(format!(
                "valid_len {valid_len} exceeds sequence length {seq_len}"
            )));
        }
        crate::segmentation::check_tiling(shots, valid_len)?;

        let global_tokens = match kind {
            PatternKind::Global | PatternKind::LocalGlobal => global_tokens(shots, globals_per_shot),
            PatternKind::Full | PatternKind::Local => Vec::new(),
            PatternKind::Causal | PatternKind::Cross => {
                return Err(Error::Config(format!("{kind:?} is not an encoder pattern")))
            }
        };
        let effective_window = match kind {
            PatternKind::Global => 1,
            _ => window,
        };
        let mut p = SparsityPattern {
            kind,
            n_queries: seq_len,
            n_keys: seq_len,
            valid_queries: valid_len,
            valid_keys: valid_len,
            window: effective_window,
            global_tokens,
            offsets: Vec::new(),
            keys: Vec::new(),
            n_pairs: 0,
        };
        match kind {
            PatternKind::Full => p.n_pairs = valid_len * valid_len,
            PatternKind::Local => {
                p.n_pairs = (0..valid_len).map(|m| p.band(m).len()).sum();
            }
            _ => p.build_lists(),
        }
        Ok(p)
    }

    /// Full connectivity over the first `valid_len` of `seq_len` positions.
    pub fn full(seq_len: usize, valid_len: usize) -> Result<Self> {
        Self::encoder(
            PatternKind::Full,
            seq_len,
            valid_len,
            1,
            &[Shot::new(0, valid_len)],
            GlobalsPerShot::ALL,
        )
        .or_else(|e| if valid_len == 0 { Ok(Self::empty_full(seq_len)) } else { Err(e) })
    }

    fn empty_full(seq_len: usize) -> Self {
        SparsityPattern {
            kind: PatternKind::Full,
            n_queries: seq_len,
            n_keys: seq_len,
            valid_queries: 0,
            valid_keys: 0,
            window: 1,
            global_tokens: Vec::new(),
            offsets: Vec::new(),
            keys: Vec::new(),
            n_pairs: 0,
        }
    }

    /// Strictly causal self-attention over `len` positions.
    pub fn causal(len: usize) -> Self {
        SparsityPattern {
            kind: PatternKind::Causal,
            n_queries: len,
            n_keys: len,
            valid_queries: len,
            valid_keys: len,
            window: 1,
            global_tokens: Vec::new(),
            offsets: Vec::new(),
            keys: Vec::new(),
            n_pairs: len * (len + 1) / 2,
        }
    }

    /// `n_queries` decoder positions attending to the first `valid_keys` of
    /// `n_keys` encoder positions.
    pub fn cross(n_queries: usize, n_keys: usize, valid_keys: usize) -> Result<Self> {
        if valid_keys > n_keys {
            return Err(Error::Precondition(format!(
                "valid key count {valid_keys} exceeds key length {n_keys}"
            )));
        }
        if valid_keys == 0 && n_queries > 0 {
            return Err(Error::Precondition("cross attention over zero keys".into()));
        }
        Ok(SparsityPattern {
            kind: PatternKind::Cross,
            n_queries,
            n_keys,
            valid_queries: n_queries,
            valid_keys,
            window: 1,
            global_tokens: Vec::new(),
            offsets: Vec::new(),
            keys: Vec::new(),
            n_pairs: n_queries * valid_keys,
        })
    }

    fn band(&self, m: usize) -> Range<usize> {
        let half = self.window / 2;
        let lo = m.saturating_sub(half);
        let hi = (m + half + 1).min(self.valid_keys);
        lo..hi
    }

    fn build_lists(&mut self) {
        let valid = self.valid_queries;
        let mut is_global = vec![false; valid];
        for &g in &self.global_tokens {
            is_global[g] = true;
        }
        self.offsets = Vec::with_capacity(self.n_queries + 1);
        self.offsets.push(0);
        let mut scratch = Vec::new();
        for m in 0..self.n_queries {
            if m < valid {
                if is_global[m] {
                    self.keys.extend(0..valid);
                } else {
                    scratch.clear();
                    merge_sorted(self.band(m), &self.global_tokens, &mut scratch);
                    self.keys.extend_from_slice(&scratch);
                }
            }
            self.offsets.push(self.keys.len());
        }
        self.n_pairs = self.keys.len();
    }

    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    /// Sequence length for self-attention patterns.
    pub fn seq_len(&self) -> usize {
        self.n_queries
    }

    pub fn valid_len(&self) -> usize {
        self.valid_keys
    }

    pub fn valid_queries(&self) -> usize {
        self.valid_queries
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn global_tokens(&self) -> &[usize] {
        &self.global_tokens
    }

    /// Total number of allowed (query, key) pairs.
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Allowed keys of query `m`, ascending.
    pub fn keys(&self, m: usize) -> KeySet<'_> {
        if m >= self.valid_queries {
            return KeySet::Range(0..0);
        }
        match self.kind {
            PatternKind::Full | PatternKind::Cross => KeySet::Range(0..self.valid_keys),
            PatternKind::Causal => KeySet::Range(0..m + 1),
            PatternKind::Local => KeySet::Range(self.band(m)),
            PatternKind::Global | PatternKind::LocalGlobal => {
                KeySet::List(&self.keys[self.offsets[m]..self.offsets[m + 1]])
            }
        }
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.keys(query).contains(key)
    }

    /// Dense boolean connectivity, row-major `n_queries × n_keys`. Reference
    /// and export use only.
    pub fn dense_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_queries * self.n_keys];
        for m in 0..self.n_queries {
            for n in self.keys(m).iter() {
                mask[m * self.n_keys + n] = true;
            }
        }
        mask
    }
}

/// Global token positions of a shot list, ascending and deduplicated.
pub fn global_tokens(shots: &[Shot], per_shot: GlobalsPerShot) -> Vec<usize> {
    let mut out = Vec::with_capacity(shots.len() * 3);
    for s in shots {
        let candidates = [s.start, s.middle(), s.end - 1];
        out.extend_from_slice(&candidates[..per_shot.get() as usize]);
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn merge_sorted(band: Range<usize>, globals: &[usize], out: &mut Vec<usize>) {
    let mut gi = globals.iter().peekable();
    for b in band {
        while let Some(&&g) = gi.peek() {
            if g < b {
                out.push(g);
                gi.next();
            } else {
                if g == b {
                    gi.next();
                }
                break;
            }
        }
        out.push(b);
    }
    out.extend(gi);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shots(bounds: &[(usize, usize)]) -> Vec<Shot> {
        bounds.iter().map(|&(s, e)| Shot::new(s, e)).collect()
    }

    /// Membership straight from the definition, one pair at a time.
    fn oracle_allows(m: usize, n: usize, valid: usize, w: usize, globals: &[usize]) -> bool {
        if m >= valid || n >= valid {
            return false;
        }
        let half = w / 2;
        let in_band = n + half >= m && n <= m + half;
        in_band || globals.contains(&n) || globals.contains(&m)
    }

    #[test]
    fn single_shot_of_five() {
        let p = SparsityPattern::lga(5, 5, 3, &shots(&[(0, 5)])).unwrap();
        assert_eq!(p.global_tokens(), &[0, 2, 4]);
        let k: Vec<_> = p.keys(1).iter().collect();
        assert_eq!(k, vec![0, 1, 2, 4]);
    }

    #[test]
    fn middle_frame_of_even_shot_is_floored() {
        assert_eq!(Shot::new(0, 4).middle(), 1);
        let p = SparsityPattern::lga(4, 4, 1, &shots(&[(0, 4)])).unwrap();
        // (0 + 4 - 1) / 2 = 1 under the floor rule
        assert_eq!(p.global_tokens(), &[0, 1, 3]);
    }

    #[test]
    fn wide_window_with_one_frame_shots_is_full() {
        let t = 6;
        let per_frame: Vec<_> = (0..t).map(|i| Shot::new(i, i + 1)).collect();
        let p = SparsityPattern::lga(t, t, 2 * t - 1, &per_frame).unwrap();
        for m in 0..t {
            assert_eq!(p.keys(m).len(), t);
        }
    }

    #[test]
    fn matches_membership_oracle() {
        let sh = shots(&[(0, 3), (3, 11), (11, 12), (12, 20)]);
        for w in [1, 3, 5, 9, 17] {
            for valid in [12, 20] {
                let sh: Vec<_> = if valid == 20 { sh.clone() } else { shots(&[(0, 3), (3, 12)]) };
                let p = SparsityPattern::lga(24, valid, w, &sh).unwrap();
                let g = p.global_tokens().to_vec();
                for m in 0..24 {
                    for n in 0..24 {
                        assert_eq!(p.allows(m, n), oracle_allows(m, n, valid, w, &g), "w={w} m={m} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn lga_is_symmetric() {
        let p = SparsityPattern::lga(30, 27, 5, &shots(&[(0, 7), (7, 20), (20, 27)])).unwrap();
        for m in 0..30 {
            for n in 0..30 {
                assert_eq!(p.allows(m, n), p.allows(n, m));
            }
        }
    }

    #[test]
    fn padding_is_disconnected() {
        let p = SparsityPattern::lga(10, 6, 3, &shots(&[(0, 6)])).unwrap();
        for m in 6..10 {
            assert!(p.keys(m).is_empty());
        }
        for m in 0..6 {
            assert!(p.keys(m).iter().all(|n| n < 6));
        }
    }

    #[test]
    fn even_window_rejected() {
        assert!(matches!(
            SparsityPattern::lga(5, 5, 4, &shots(&[(0, 5)])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gapped_or_overlapping_shots_rejected() {
        assert!(matches!(
            SparsityPattern::lga(10, 10, 3, &shots(&[(0, 4), (5, 10)])),
            Err(Error::Segmentation(_))
        ));
        assert!(matches!(
            SparsityPattern::lga(10, 10, 3, &shots(&[(0, 6), (5, 10)])),
            Err(Error::Segmentation(_))
        ));
    }

    #[test]
    fn causal_masks_upper_triangle() {
        let p = SparsityPattern::causal(3);
        assert!(!p.allows(0, 1) && !p.allows(0, 2) && !p.allows(1, 2));
        assert!(p.allows(2, 0) && p.allows(1, 1));
        assert_eq!(p.n_pairs(), 6);
    }

    #[test]
    fn globals_per_shot_variants() {
        let sh = shots(&[(0, 5), (5, 10)]);
        let one = global_tokens(&sh, GlobalsPerShot::new(1).unwrap());
        let two = global_tokens(&sh, GlobalsPerShot::new(2).unwrap());
        assert_eq!(one, vec![0, 5]);
        assert_eq!(two, vec![0, 2, 5, 7]);
        assert!(GlobalsPerShot::new(4).is_err());
    }
}
