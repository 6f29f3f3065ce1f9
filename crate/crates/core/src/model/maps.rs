//! Per-head attention maps of one video for offline inspection.

use std::path::{Path, PathBuf};

use crate::attention::export::{write_attention_csv, write_attention_pgm};
use crate::attention::SparsityPattern;
use crate::error::{Error, Result};
use crate::model::FullTransNet;
use crate::numerics::{Matrix, NodeId, ParameterStore, Tape};
use crate::scalar::Scalar;
use crate::segmentation::Shot;

/// One head's weights over the allowed pairs of `pattern`, in row order.
#[derive(Clone, Debug)]
pub struct AttentionMap {
    pub pattern: SparsityPattern,
    pub weights: Vec<f64>,
}

impl AttentionMap {
    /// Dense `n_queries × n_keys` view; disallowed pairs are zero.
    pub fn dense(&self) -> Matrix<f64> {
        crate::attention::dense_weights(&self.pattern, &self.weights)
    }

    /// Allowed `(query, key)` pairs of the valid region.
    pub fn support(&self) -> Vec<(usize, usize)> {
        (0..self.pattern.n_queries()).flat_map(|m| self.pattern.keys(m).iter().map(move |n| (m, n))).collect()
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<[PathBuf; 2]> {
        let csv = dir.join(format!("{stem}.csv"));
        let pgm = dir.join(format!("{stem}.pgm"));
        write_attention_csv(&csv, &self.pattern, &self.weights)?;
        write_attention_pgm(&pgm, &self.pattern, &self.weights)?;
        Ok([csv, pgm])
    }
}

/// Encoder, masked decoder and cross attention of one (layer, head).
#[derive(Clone, Debug)]
pub struct AttentionMaps {
    pub layer: usize,
    pub head: usize,
    /// Frames fed to the decoder after the start token.
    pub decoder_frames: Vec<usize>,
    pub encoder: AttentionMap,
    pub decoder: AttentionMap,
    pub cross: AttentionMap,
}

impl AttentionMaps {
    /// Writes `{encoder,decoder,cross}_l{layer}_h{head}.{csv,pgm}` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::with_capacity(6);
        for (name, map) in [("encoder", &self.encoder), ("decoder", &self.decoder), ("cross", &self.cross)] {
            out.extend(map.write(dir, &format!("{name}_l{}_h{}", self.layer, self.head))?);
        }
        Ok(out)
    }
}

fn head_map<T: Scalar>(tape: &Tape<T>, node: NodeId, head: usize) -> Result<AttentionMap> {
    let (pattern, weights) = tape
        .attention_weights(node)
        .ok_or_else(|| Error::Precondition("attention weights were not retained".into()))?;
    Ok(AttentionMap {
        pattern: pattern.clone(),
        weights: weights[head].iter().map(|w| w.to_f64_lossy()).collect(),
    })
}

impl FullTransNet {
    /// Attention maps of `layer`/`head` for one video. The decoder runs on the
    /// given frames, or on the free-running decode when `frames` is `None`.
    pub fn attention_maps<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        shots: &[Shot],
        frames: Option<&[usize]>,
        layer: usize,
        head: usize,
    ) -> Result<AttentionMaps> {
        let c = self.config();
        if layer >= c.layers || head >= c.heads {
            return Err(Error::Precondition(format!(
                "layer {layer} / head {head} out of range: layers 0..{}, heads 0..{}",
                c.layers, c.heads
            )));
        }
        let t = features.rows();
        let decoder_frames = match frames {
            Some(f) => f.to_vec(),
            None => {
                let encoded = self.encode(store, features, t, shots)?;
                let (_, mut emitted) = self.decode_sequence(store, &encoded)?;
                emitted.pop();
                emitted
            }
        };
        let mut tape = Tape::new();
        let enc = self.encode_on(&mut tape, store, features, t, shots)?;
        let input = self.decoder_input(&mut tape, store, features, &decoder_frames)?;
        let dec = self.decode_on(&mut tape, store, input, enc.output)?;
        Ok(AttentionMaps {
            layer,
            head,
            encoder: head_map(&tape, enc.attention[layer], head)?,
            decoder: head_map(&tape, dec.self_attention[layer], head)?,
            cross: head_map(&tape, dec.cross_attention[layer], head)?,
            decoder_frames,
        })
    }
}
