use std::sync::Arc;

use rand::Rng;

use crate::attention::SparsityPattern;
use crate::error::{Error, Result};
use crate::numerics::{xavier_uniform, Matrix, NodeId, ParameterStore, Tape};
use crate::scalar::Scalar;

/// One multi-head attention block whose weights live in a [`ParameterStore`]
/// under `<prefix>.{wq,bq,wk,bk,wv,bv,wo,bo}`.
///
/// The `d × d` query/key/value projections hold the `h` per-head `d × d/h`
/// projections side by side; head `i` owns columns `i*d/h..(i+1)*d/h`. The
/// concatenated head outputs are mapped back to `d` by `wo`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    prefix: String,
    heads: usize,
}

/// Nodes produced by one attention block.
#[derive(Clone, Copy, Debug)]
pub struct AttentionNodes {
    pub output: NodeId,
    /// The fused attention node; its weights are retained on recording tapes.
    pub attention: NodeId,
}

const PARTS: [&str; 4] = ["q", "k", "v", "o"];

impl MultiHeadAttention {
    pub fn new(prefix: impl Into<String>, heads: usize) -> Self {
        MultiHeadAttention {
            prefix: prefix.into(),
            heads,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn name(&self, kind: &str, part: &str) -> String {
        format!("{}.{kind}{part}", self.prefix)
    }

    pub fn check_width(&self, d: usize) -> Result<()> {
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::Config(format!(
                "model width {d} is not divisible by {} heads",
                self.heads
            )));
        }
        Ok(())
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, store: &mut ParameterStore<T>, d: usize, rng: &mut R) -> Result<()> {
        self.check_width(d)?;
        for part in PARTS {
            store.insert(self.name("w", part), xavier_uniform(d, d, rng))?;
            store.insert(self.name("b", part), Matrix::zeros(1, d))?;
        }
        Ok(())
    }

    /// Attention of `query_src` rows over `kv_src` rows restricted to `pattern`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        query_src: NodeId,
        kv_src: NodeId,
        pattern: Arc<SparsityPattern>,
    ) -> Result<AttentionNodes> {
        self.check_width(tape.value(query_src).cols())?;
        let proj = |tape: &mut Tape<T>, src: NodeId, part: &str| -> Result<NodeId> {
            let w = tape.param(store, &self.name("w", part))?;
            let b = tape.param(store, &self.name("b", part))?;
            tape.linear(src, w, b)
        };
        let q = proj(tape, query_src, "q")?;
        let k = proj(tape, kv_src, "k")?;
        let v = proj(tape, kv_src, "v")?;
        let attention = tape.attention(q, k, v, pattern, self.heads)?;
        let output = proj(tape, attention, "o")?;
        Ok(AttentionNodes { output, attention })
    }
}

/// Evaluates one attention block outside of training.
pub fn multi_head<T: Scalar>(
    block: &MultiHeadAttention,
    store: &ParameterStore<T>,
    query_src: &Matrix<T>,
    kv_src: &Matrix<T>,
    pattern: Arc<SparsityPattern>,
) -> Result<Matrix<T>> {
    let mut tape = Tape::inference();
    let q = tape.constant(query_src.clone());
    let kv = tape.constant(kv_src.clone());
    let nodes = block.forward(&mut tape, store, q, kv, pattern)?;
    Ok(tape.value(nodes.output).clone())
}
