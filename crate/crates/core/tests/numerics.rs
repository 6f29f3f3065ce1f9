mod common;

use std::sync::Arc;

use common::{random_matrix, rng};
use fulltransnet::attention::SparsityPattern;
use fulltransnet::numerics::{finite_diff_check, layer_norm, softmax_rows, Matrix, ParameterStore, Tape};
use fulltransnet::{Error, Result, Scalar};
use proptest::prelude::*;

fn naive_matmul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(a.rows(), b.cols(), |r, c| (0..a.cols()).map(|k| a.get(r, k) * b.get(k, c)).sum())
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    for &(m, k, n) in &[(1, 1, 1), (3, 7, 2), (17, 33, 9), (64, 64, 64), (5, 130, 3)] {
        let a: Matrix<f64> = random_matrix(&mut r, m, k);
        let b: Matrix<f64> = random_matrix(&mut r, k, n);
        let got = a.matmul(&b).unwrap();
        assert!(got.max_abs_diff(&naive_matmul(&a, &b)).unwrap() < 1e-12);
    }
}

#[test]
fn matmul_rejects_shape_mismatch() {
    let a = Matrix::<f64>::zeros(2, 3);
    assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
}

#[test]
fn arithmetic_rejects_mask_sentinel() {
    let mut a = Matrix::<f32>::zeros(2, 2);
    a.set(1, 0, f32::NEG_INFINITY);
    let b = Matrix::<f32>::zeros(2, 2);
    assert!(matches!(a.matmul(&b), Err(Error::MaskSentinel { .. })));
    assert!(matches!(a.add(&b), Err(Error::MaskSentinel { .. })));
    assert!(matches!(b.sub(&a), Err(Error::MaskSentinel { .. })));
    assert!(matches!(a.hadamard(&b), Err(Error::MaskSentinel { .. })));
}

#[test]
fn softmax_masks_to_zero_and_rejects_empty_rows() {
    let ninf = f64::NEG_INFINITY;
    let a = Matrix::from_rows(&[[0.0, ninf, 0.0], [ninf, ninf, ninf]]).unwrap();
    assert!(matches!(softmax_rows(&a), Err(Error::DegenerateRow { row: 1 })));
    let s = softmax_rows(&a.slice_rows(0, 1).unwrap()).unwrap();
    assert_eq!(s.row(0), &[0.5, 0.0, 0.5]);
}

#[test]
fn softmax_survives_large_logits() {
    let a = Matrix::from_rows(&[[1000.0f32, 999.0, -1000.0]]).unwrap();
    let s = softmax_rows(&a).unwrap();
    assert!(s.is_finite());
    let e = (-1.0f64).exp();
    assert!((s.get(0, 0) as f64 - 1.0 / (1.0 + e)).abs() < 1e-6);
    assert_eq!(s.get(0, 2), 0.0);
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        row in prop::collection::vec(-20.0f64..20.0, 1..40),
        shift in -100.0f64..100.0,
    ) {
        let a = Matrix::row_vector(&row);
        let b = a.map(|v| v + shift);
        let sa = softmax_rows(&a).unwrap();
        let sb = softmax_rows(&b).unwrap();
        prop_assert!(sa.max_abs_diff(&sb).unwrap() <= 1e-9);
        prop_assert!((sa.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn layer_norm_matches_formula(
        rows in 1usize..6,
        cols in 2usize..24,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let x: Matrix<f64> = random_matrix(&mut r, rows, cols).scale(3.0);
        let g: Matrix<f64> = random_matrix(&mut r, 1, cols);
        let b: Matrix<f64> = random_matrix(&mut r, 1, cols);
        let got = layer_norm(&x, &g, &b).unwrap();
        for i in 0..rows {
            let mean = x.row(i).iter().sum::<f64>() / cols as f64;
            let var = x.row(i).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
            for j in 0..cols {
                let want = (x.get(i, j) - mean) / (var + f64::LAYER_NORM_EPS).sqrt() * g.get(0, j) + b.get(0, j);
                prop_assert!((got.get(i, j) - want).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn concat_of_eight_heads_is_model_width() {
    let mut r = rng(2);
    let blocks: Vec<Matrix<f32>> = (0..8).map(|_| random_matrix(&mut r, 5, 8)).collect();
    let refs: Vec<&Matrix<f32>> = blocks.iter().collect();
    let cat = Matrix::concat_cols(&refs).unwrap();
    assert_eq!(cat.shape(), (5, 64));
    for (h, b) in blocks.iter().enumerate() {
        assert_eq!(cat.slice_cols(h * 8, (h + 1) * 8).unwrap(), *b);
    }
}

#[test]
fn linear_with_zero_weights_returns_bias() {
    let mut r = rng(3);
    let x: Matrix<f64> = random_matrix(&mut r, 4, 6);
    let b: Matrix<f64> = random_matrix(&mut r, 1, 3);
    let out = x.linear(&Matrix::zeros(6, 3), &b).unwrap();
    for i in 0..4 {
        assert_eq!(out.row(i), b.row(0));
    }
}

/// Store with `a` (4×6), `b` (6×6), `g`, `h` (1×6) filled from `seed`.
fn op_params(seed: u64) -> ParameterStore<f64> {
    let mut r = rng(seed);
    let mut s = ParameterStore::new();
    s.insert("a", random_matrix(&mut r, 4, 6)).unwrap();
    s.insert("b", random_matrix(&mut r, 6, 6)).unwrap();
    s.insert("g", random_matrix(&mut r, 1, 6)).unwrap();
    s.insert("h", random_matrix(&mut r, 1, 6)).unwrap();
    s
}

/// Runs `build` on a recording tape, reduces its output with a fixed random
/// projection and checks the analytic gradient against central differences.
fn check_op(name: &str, build: impl Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<fulltransnet::numerics::NodeId>) {
    let store = op_params(7);
    let loss_of = |p: &ParameterStore<f64>, grads: Option<&mut ParameterStore<f64>>| -> Result<f64> {
        let mut tape = Tape::new();
        let out = build(&mut tape, p)?;
        let (rows, cols) = tape.value(out).shape();
        let mut r = rng(99);
        let w = tape.constant(random_matrix(&mut r, rows, cols));
        let prod = tape.mul(out, w)?;
        let loss = tape.sum(prod);
        if let Some(g) = grads {
            g.zero_grads();
            tape.backward(loss)?.accumulate_into(g)?;
        }
        Ok(tape.scalar(loss))
    };
    let mut analytic = store.clone();
    loss_of(&store, Some(&mut analytic)).unwrap();
    let report = finite_diff_check(|p| loss_of(p, None), &analytic, 1e-6, 1e-6).unwrap();
    assert!(report.passed(), "{name}: max rel error {}", report.max_rel_error);
}

#[test]
fn gradient_of_each_tape_op() {
    check_op("matmul", |t, s| {
        let a = t.param(s, "a")?;
        let b = t.param(s, "b")?;
        t.matmul(a, b)
    });
    check_op("linear", |t, s| {
        let a = t.param(s, "a")?;
        let b = t.param(s, "b")?;
        let g = t.param(s, "g")?;
        t.linear(a, b, g)
    });
    check_op("mul+scale", |t, s| {
        let a = t.param(s, "a")?;
        let a2 = t.mul(a, a)?;
        Ok(t.scale(a2, 0.3))
    });
    check_op("relu", |t, s| {
        let a = t.param(s, "a")?;
        Ok(t.relu(a))
    });
    check_op("transpose", |t, s| {
        let a = t.param(s, "a")?;
        let at = t.transpose(a);
        let b = t.param(s, "b")?;
        t.matmul(b, at)
    });
    check_op("softmax", |t, s| {
        let a = t.param(s, "a")?;
        t.softmax_rows(a)
    });
    check_op("layer_norm", |t, s| {
        let a = t.param(s, "a")?;
        let g = t.param(s, "g")?;
        let h = t.param(s, "h")?;
        t.layer_norm(a, g, h)
    });
    check_op("concat+slice", |t, s| {
        let a = t.param(s, "a")?;
        let b = t.param(s, "b")?;
        let c = t.concat_rows(&[a, b])?;
        let d = t.concat_cols(&[c, c])?;
        t.slice_cols(d, 3, 9)
    });
    check_op("attention", |t, s| {
        let a = t.param(s, "a")?;
        let b = t.param(s, "b")?;
        let q = t.matmul(a, b)?;
        let pattern = Arc::new(SparsityPattern::causal(4));
        t.attention(q, a, a, pattern, 2)
    });
}

#[test]
fn bce_node_matches_direct_sum() {
    let p = Matrix::from_rows(&[[0.2, 0.7], [0.9, 0.4]]).unwrap();
    let y = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let mut tape = Tape::<f64>::inference();
    let pn = tape.constant(p.clone());
    let l = tape.bce(pn, y.clone(), 0.5).unwrap();
    let want = -0.5 * (0.8f64.ln() + 0.7f64.ln() + 0.9f64.ln() + 0.6f64.ln());
    assert!((tape.scalar(l) - want).abs() < 1e-12);
}
