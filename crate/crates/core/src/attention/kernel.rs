use crate::attention::meter::{MeterCharge, MeteredBuf};
use crate::attention::pattern::SparsityPattern;
use crate::error::{Error, Result};
use crate::numerics::matrix::dot;
use crate::numerics::{softmax_rows, Matrix};
use crate::scalar::Scalar;

/// Attention values and, optionally, the weight matrix that produced them.
#[derive(Clone, Debug)]
pub struct AttentionOutput<T: Scalar> {
    pub values: Matrix<T>,
    pub weights: Option<Matrix<T>>,
}

/// Dense `n_queries × n_keys` scores: `q·kᵀ / sqrt(d_k)` on allowed pairs,
/// the `-inf` sentinel elsewhere. Only allowed pairs are computed.
pub fn scaled_scores<T: Scalar>(q: &Matrix<T>, k: &Matrix<T>, pattern: &SparsityPattern) -> Result<Matrix<T>> {
    if q.cols() != k.cols() {
        return Err(Error::dims("scaled_scores", q.shape(), k.shape()));
    }
    check_pattern_shape(pattern, q.rows(), k.rows())?;
    let scale = T::one() / T::from_count(q.cols()).sqrt();
    let _charge = MeterCharge::new(q.rows() * k.rows() * std::mem::size_of::<T>());
    let mut s = Matrix::filled(q.rows(), k.rows(), T::neg_infinity());
    for m in 0..q.rows() {
        let qm = q.row(m);
        for n in pattern.keys(m).iter() {
            s.set(m, n, dot(qm, k.row(n)) * scale);
        }
    }
    Ok(s)
}

/// `softmax_rows(scores) · v`.
pub fn attend<T: Scalar>(scores: &Matrix<T>, v: &Matrix<T>) -> Result<AttentionOutput<T>> {
    if scores.cols() != v.rows() {
        return Err(Error::dims("attend", scores.shape(), v.shape()));
    }
    let weights = softmax_rows(scores)?;
    let values = weights.matmul(v)?;
    Ok(AttentionOutput {
        values,
        weights: Some(weights),
    })
}

fn check_pattern_shape(pattern: &SparsityPattern, n_queries: usize, n_keys: usize) -> Result<()> {
    if pattern.n_queries() != n_queries || pattern.n_keys() != n_keys {
        return Err(Error::dims(
            "attention pattern",
            (pattern.n_queries(), pattern.n_keys()),
            (n_queries, n_keys),
        ));
    }
    Ok(())
}

/// Per-head attention weights aligned with the pattern's key lists: query
/// `m`'s weights are contiguous, in ascending key order.
pub type HeadWeights<T> = MeteredBuf<T>;

/// Multi-head attention over pre-projected `q`, `k`, `v` (`d` columns each,
/// head `h` owning columns `h*d/heads..(h+1)*d/heads`).
///
/// Each query gathers only its allowed keys, so work and buffer memory are
/// proportional to the number of allowed pairs. Queries outside the pattern's
/// valid range produce zero rows.
pub fn sparse_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    pattern: &SparsityPattern,
    heads: usize,
    keep_weights: bool,
) -> Result<(Matrix<T>, Vec<HeadWeights<T>>)> {
    let d = q.cols();
    if k.cols() != d || v.cols() != d {
        return Err(Error::dims("sparse_attention", q.shape(), k.shape()));
    }
    if k.rows() != v.rows() {
        return Err(Error::dims("sparse_attention", k.shape(), v.shape()));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Config(format!("width {d} is not divisible by {heads} heads")));
    }
    check_pattern_shape(pattern, q.rows(), k.rows())?;
    let dk = d / heads;
    let scale = T::one() / T::from_count(dk).sqrt();
    let mut out = Matrix::zeros(q.rows(), d);
    let mut kept = Vec::with_capacity(if keep_weights { heads } else { 0 });

    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let mut w = MeteredBuf::filled(pattern.n_pairs(), T::zero());
        let mut off = 0;
        for m in 0..q.rows() {
            let keys = pattern.keys(m);
            let cnt = keys.len();
            if cnt == 0 {
                if m < pattern.valid_queries() {
                    return Err(Error::DegenerateRow { row: m });
                }
                continue;
            }
            let qm = &q.row(m)[cols.clone()];
            let buf = &mut w[off..off + cnt];
            let mut max = T::neg_infinity();
            for (slot, n) in buf.iter_mut().zip(keys.iter()) {
                let s = dot(qm, &k.row(n)[cols.clone()]) * scale;
                *slot = s;
                if s > max {
                    max = s;
                }
            }
            let mut sum = T::zero();
            for slot in buf.iter_mut() {
                *slot = (*slot - max).exp();
                sum += *slot;
            }
            for slot in buf.iter_mut() {
                *slot = *slot / sum;
            }
            let orow = &mut out.row_mut(m)[cols.clone()];
            for (&wt, n) in buf.iter().zip(keys.iter()) {
                for (o, &x) in orow.iter_mut().zip(&v.row(n)[cols.clone()]) {
                    *o += wt * x;
                }
            }
            off += cnt;
        }
        if keep_weights {
            kept.push(w);
        }
    }
    Ok((out, kept))
}

/// Gradients of [`sparse_attention`] with respect to `q`, `k` and `v`.
pub fn sparse_attention_backward<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    pattern: &SparsityPattern,
    weights: &[HeadWeights<T>],
    grad_out: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let heads = weights.len();
    let d = q.cols();
    let dk = d / heads;
    let scale = T::one() / T::from_count(dk).sqrt();
    let mut gq = Matrix::zeros(q.rows(), d);
    let mut gk = Matrix::zeros(k.rows(), d);
    let mut gv = Matrix::zeros(v.rows(), d);
    let mut dw = Vec::new();

    for (h, w) in weights.iter().enumerate() {
        let cols = h * dk..(h + 1) * dk;
        let mut off = 0;
        for m in 0..q.rows() {
            let keys = pattern.keys(m);
            let cnt = keys.len();
            if cnt == 0 {
                continue;
            }
            let wm = &w[off..off + cnt];
            let go = &grad_out.row(m)[cols.clone()];
            dw.clear();
            let mut inner = T::zero();
            for (&wt, n) in wm.iter().zip(keys.iter()) {
                let g = dot(go, &v.row(n)[cols.clone()]);
                dw.push(g);
                inner += wt * g;
            }
            let qm: Vec<T> = q.row(m)[cols.clone()].to_vec();
            for ((&wt, &g), n) in wm.iter().zip(&dw).zip(keys.iter()) {
                let ds = wt * (g - inner) * scale;
                let kn = &k.row(n)[cols.clone()];
                let gqm = &mut gq.row_mut(m)[cols.clone()];
                for (a, &b) in gqm.iter_mut().zip(kn) {
                    *a += ds * b;
                }
                let gkn = &mut gk.row_mut(n)[cols.clone()];
                for (a, &b) in gkn.iter_mut().zip(&qm) {
                    *a += ds * b;
                }
                let gvn = &mut gv.row_mut(n)[cols.clone()];
                for (a, &b) in gvn.iter_mut().zip(go) {
                    *a += wt * b;
                }
            }
            off += cnt;
        }
    }
    (gq, gk, gv)
}

/// Expands one head's pattern-aligned weights into a dense matrix.
pub fn dense_weights<T: Scalar>(pattern: &SparsityPattern, weights: &[T]) -> Matrix<T> {
    let mut out = Matrix::zeros(pattern.n_queries(), pattern.n_keys());
    let mut off = 0;
    for m in 0..pattern.n_queries() {
        for n in pattern.keys(m).iter() {
            out.set(m, n, weights[off]);
            off += 1;
        }
    }
    out
}
