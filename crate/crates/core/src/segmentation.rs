//! Shot boundaries and kernel temporal segmentation.
//!
//! Change points minimize the total within-segment scatter of unit-normalized
//! features under a linear kernel, plus a model-size penalty
//! `penalty * m * (ln(T / m) + 1)` for `m` change points. The optimum for
//! every `m` up to `max_shots - 1` comes from one dynamic program over a
//! prefix-summed Gram matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Half-open frame range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shot {
    pub start: usize,
    pub end: usize,
}

impl Shot {
    pub fn new(start: usize, end: usize) -> Self {
        Shot { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// `(start + end - 1) / 2`, rounded down.
    pub fn middle(&self) -> usize {
        (self.start + self.end - 1) / 2
    }

    pub fn frames(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotSource {
    Detected,
    Provided,
}

/// Ordered shots tiling `[0, valid_len)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotList {
    shots: Vec<Shot>,
    source: ShotSource,
}

impl ShotList {
    pub fn new(shots: Vec<Shot>, valid_len: usize, source: ShotSource) -> Result<Self> {
        check_tiling(&shots, valid_len)?;
        Ok(ShotList { shots, source })
    }

    /// Shots from sorted change points (each the first frame of a new shot).
    pub fn from_change_points(change_points: &[usize], valid_len: usize, source: ShotSource) -> Result<Self> {
        let mut shots = Vec::with_capacity(change_points.len() + 1);
        let mut start = 0;
        for &cp in change_points.iter().chain(std::iter::once(&valid_len)) {
            shots.push(Shot::new(start, cp));
            start = cp;
        }
        Self::new(shots, valid_len, source)
    }

    pub fn shots(&self) -> &[Shot] {
        &self.shots
    }

    pub fn source(&self) -> ShotSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.shots.last().map_or(0, |s| s.end)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.shots.iter().map(Shot::len).collect()
    }

    /// First frame of every shot after the first.
    pub fn change_points(&self) -> Vec<usize> {
        self.shots.iter().skip(1).map(|s| s.start).collect()
    }
}

/// Checks that `shots` tile `[0, valid_len)` with no gap, overlap or empty shot.
pub fn check_tiling(shots: &[Shot], valid_len: usize) -> Result<()> {
    let mut expected = 0;
    for (i, s) in shots.iter().enumerate() {
        if s.start != expected {
            let what = if s.start > expected { "gap" } else { "overlap" };
            return Err(Error::Segmentation(format!(
                "{what} before shot {i}: expected start {expected}, got {}",
                s.start
            )));
        }
        if s.end <= s.start {
            return Err(Error::Segmentation(format!("shot {i} [{}, {}) is empty", s.start, s.end)));
        }
        expected = s.end;
    }
    if expected != valid_len {
        return Err(Error::Segmentation(format!(
            "shots cover [0, {expected}) but the valid range is [0, {valid_len})"
        )));
    }
    Ok(())
}

/// Penalty for `m` change points in a sequence of `t` frames.
pub fn size_penalty(penalty: f64, m: usize, t: usize) -> f64 {
    if m == 0 {
        0.0
    } else {
        let m = m as f64;
        penalty * m * ((t as f64 / m).ln() + 1.0)
    }
}

/// Within-segment scatter of unit-normalized features, prefix-summed so any
/// segment costs O(1).
pub struct ScatterTable {
    n: usize,
    diag: Vec<f64>,
    block: Vec<f64>,
}

impl ScatterTable {
    pub fn new<T: Scalar>(features: &Matrix<T>) -> Self {
        let x = normalized_rows(features);
        let n = x.len();
        let mut diag = vec![0.0; n + 1];
        let stride = n + 1;
        let mut block = vec![0.0; stride * stride];
        for i in 0..n {
            let mut row_acc = 0.0;
            for j in 0..n {
                let k = dot64(&x[i], &x[j]);
                if i == j {
                    diag[i + 1] = diag[i] + k;
                }
                row_acc += k;
                block[(i + 1) * stride + (j + 1)] = block[i * stride + (j + 1)] + row_acc;
            }
        }
        if n == 0 {
            diag[0] = 0.0;
        }
        ScatterTable { n, diag, block }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Scatter of segment `[i, j)`.
    pub fn segment(&self, i: usize, j: usize) -> f64 {
        let s = self.n + 1;
        let gram = self.block[j * s + j] - self.block[i * s + j] - self.block[j * s + i] + self.block[i * s + i];
        let v = self.diag[j] - self.diag[i] - gram / (j - i) as f64;
        v.max(0.0)
    }

    pub fn total(&self, shots: &[Shot]) -> f64 {
        shots.iter().map(|s| self.segment(s.start, s.end)).sum()
    }
}

/// Penalized objective of a segmentation: total scatter plus size penalty.
pub fn kts_objective<T: Scalar>(features: &Matrix<T>, shots: &[Shot], penalty: f64) -> f64 {
    let table = ScatterTable::new(features);
    table.total(shots) + size_penalty(penalty, shots.len().saturating_sub(1), features.rows())
}

/// Kernel temporal segmentation.
///
/// Returns the segmentation with at most `max_shots` shots minimizing
/// scatter plus size penalty. Ties prefer fewer shots, then earlier change
/// points.
pub fn kts_segment<T: Scalar>(features: &Matrix<T>, max_shots: usize, penalty: f64) -> Result<ShotList> {
    let t = features.rows();
    if t == 0 {
        return Err(Error::Precondition("cannot segment an empty sequence".into()));
    }
    let table = ScatterTable::new(features);
    let max_cp = max_shots.max(1).min(t) - 1;

    // cost[k][j]: best scatter of [0, j) using k change points.
    let inf = f64::INFINITY;
    let mut cost = vec![vec![inf; t + 1]; max_cp + 1];
    let mut back = vec![vec![0usize; t + 1]; max_cp + 1];
    for j in 1..=t {
        cost[0][j] = table.segment(0, j);
    }
    for k in 1..=max_cp {
        for j in (k + 1)..=t {
            let mut best = inf;
            let mut arg = k;
            for s in k..j {
                let c = cost[k - 1][s] + table.segment(s, j);
                if c < best {
                    best = c;
                    arg = s;
                }
            }
            cost[k][j] = best;
            back[k][j] = arg;
        }
    }

    let mut best_k = 0;
    let mut best_obj = inf;
    for (k, row) in cost.iter().enumerate() {
        let obj = row[t] + size_penalty(penalty, k, t);
        if obj < best_obj {
            best_obj = obj;
            best_k = k;
        }
    }

    let mut cps = Vec::with_capacity(best_k);
    let mut j = t;
    for k in (1..=best_k).rev() {
        j = back[k][j];
        cps.push(j);
    }
    cps.reverse();
    ShotList::from_change_points(&cps, t, ShotSource::Detected)
}

fn normalized_rows<T: Scalar>(features: &Matrix<T>) -> Vec<Vec<f64>> {
    (0..features.rows())
        .map(|r| {
            let row: Vec<f64> = features.row(r).iter().map(|v| v.to_f64_lossy()).collect();
            let norm = dot64(&row, &row).sqrt();
            if norm > 0.0 {
                row.iter().map(|v| v / norm).collect()
            } else {
                row
            }
        })
        .collect()
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_features_form_one_shot() {
        let x = Matrix::<f64>::filled(17, 4, 0.3);
        let s = kts_segment(&x, 8, 1.0).unwrap();
        assert_eq!(s.shots(), &[Shot::new(0, 17)]);
        assert_eq!(s.source(), ShotSource::Detected);
    }

    #[test]
    fn single_frame() {
        let x = Matrix::<f32>::filled(1, 3, 1.0);
        assert_eq!(kts_segment(&x, 5, 1.0).unwrap().shots(), &[Shot::new(0, 1)]);
    }

    #[test]
    fn orthogonal_blocks_split_at_ten() {
        let x = Matrix::<f64>::from_fn(20, 2, |r, c| if (r < 10) == (c == 0) { 1.0 } else { 0.0 });
        let s = kts_segment(&x, 4, 1.0).unwrap();
        assert_eq!(s.change_points(), vec![10]);
    }

    #[test]
    fn scatter_matches_definition() {
        let x = Matrix::<f64>::from_fn(6, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 1.5);
        let table = ScatterTable::new(&x);
        let rows = normalized_rows(&x);
        for i in 0..6 {
            for j in i + 1..=6 {
                let n = (j - i) as f64;
                let mean: Vec<f64> = (0..3).map(|c| rows[i..j].iter().map(|r| r[c]).sum::<f64>() / n).collect();
                let direct: f64 = rows[i..j]
                    .iter()
                    .map(|r| r.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                    .sum();
                assert!((table.segment(i, j) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiling_checks() {
        assert!(check_tiling(&[Shot::new(0, 3), Shot::new(3, 5)], 5).is_ok());
        assert!(check_tiling(&[Shot::new(0, 3)], 5).is_err());
        assert!(check_tiling(&[Shot::new(0, 3), Shot::new(3, 3), Shot::new(3, 5)], 5).is_err());
        assert!(check_tiling(&[], 0).is_ok());
    }
}
