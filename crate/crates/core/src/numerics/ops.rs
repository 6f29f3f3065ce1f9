//! Row-wise primitives shared by the tape and by the dense reference paths.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Row-wise softmax, stabilized by subtracting the row maximum.
///
/// `-inf` entries are the mask sentinel and map to exactly zero. A row with
/// no finite entry is an error: it means a query was given nothing to
/// attend to.
pub fn softmax_rows<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let mut out = a.clone();
    for r in 0..a.rows() {
        softmax_in_place(out.row_mut(r)).ok_or(Error::DegenerateRow { row: r })?;
    }
    Ok(out)
}

/// Returns `None` when the row has no finite entry.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) -> Option<()> {
    let max = row
        .iter()
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
    if !max.is_finite() {
        return None;
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
    Some(())
}

/// Intermediate values of a layer-norm forward pass, kept for backward.
#[derive(Clone, Debug)]
pub(crate) struct LayerNormCache<T: Scalar> {
    pub xhat: Matrix<T>,
    pub inv_std: Vec<T>,
}

/// `(x - mean) / sqrt(var + eps) * gain + bias`, per row, biased variance.
pub fn layer_norm<T: Scalar>(a: &Matrix<T>, gain: &Matrix<T>, bias: &Matrix<T>) -> Result<Matrix<T>> {
    layer_norm_cached(a, gain, bias).map(|(out, _)| out)
}

pub(crate) fn layer_norm_cached<T: Scalar>(
    a: &Matrix<T>,
    gain: &Matrix<T>,
    bias: &Matrix<T>,
) -> Result<(Matrix<T>, LayerNormCache<T>)> {
    let n = a.cols();
    if gain.len() != n || bias.len() != n {
        return Err(Error::dims("layer_norm", a.shape(), gain.shape()));
    }
    a.reject_sentinel("layer_norm")?;
    let nf = T::from_count(n);
    let mut xhat = Matrix::zeros(a.rows(), n);
    let mut out = Matrix::zeros(a.rows(), n);
    let mut inv_std = Vec::with_capacity(a.rows());
    for r in 0..a.rows() {
        let row = a.row(r);
        let mean = row.iter().fold(T::zero(), |s, &v| s + v) / nf;
        let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / nf;
        let istd = T::one() / (var + T::LAYER_NORM_EPS).sqrt();
        inv_std.push(istd);
        let xh = xhat.row_mut(r);
        for (h, &v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * istd;
        }
        let o = out.row_mut(r);
        for c in 0..n {
            o[c] = xhat.get(r, c) * gain.data()[c] + bias.data()[c];
        }
    }
    Ok((out, LayerNormCache { xhat, inv_std }))
}
