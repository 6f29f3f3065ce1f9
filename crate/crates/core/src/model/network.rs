use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{MultiHeadAttention, SparsityPattern};
use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, StepAggregation};
use crate::numerics::{xavier_uniform, Matrix, NodeId, ParameterStore, Tape};
use crate::scalar::Scalar;
use crate::segmentation::Shot;

/// Sinusoidal position table: `sin(pos / 10000^(2i/d))` on even channels and
/// the matching cosine on odd ones.
pub fn positional_encoding<T: Scalar>(len: usize, d: usize) -> Matrix<T> {
    Matrix::from_fn(len, d, |pos, c| {
        let i = (c / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
        T::from_f64_lossy(if c % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// Where the decoder inputs of a forward pass came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderSource {
    GroundTruth,
    Predicted,
}

/// Node handles of one encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    /// `valid_len × d` output of the last layer.
    pub output: NodeId,
    pub pattern: Arc<SparsityPattern>,
    pub attention: Vec<NodeId>,
}

/// Node handles of one decoder pass.
#[derive(Clone, Debug)]
pub struct DecoderTrace {
    /// `L × T` row-stochastic output.
    pub probs: NodeId,
    pub self_attention: Vec<NodeId>,
    pub cross_attention: Vec<NodeId>,
}

/// Node handles of a full forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    pub decoder: DecoderTrace,
    pub source: DecoderSource,
}

/// Final encoder state of one video.
#[derive(Clone, Debug)]
pub struct EncodedVideo<T: Scalar> {
    /// Padded-length output; rows at or beyond `valid_len` are zero.
    pub output: Matrix<T>,
    pub valid_len: usize,
    pub pattern: Arc<SparsityPattern>,
    /// Raw features of the valid frames, embedded again as decoder inputs.
    pub features: Matrix<T>,
}

/// Encoder-decoder summarizer. Holds only the architecture; weights live in a
/// [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct FullTransNet {
    config: ModelConfig,
}

impl FullTransNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(FullTransNet { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn enc_attn(&self, layer: usize) -> MultiHeadAttention {
        MultiHeadAttention::new(format!("enc.{layer}.attn"), self.config.heads)
    }

    fn dec_self_attn(&self, layer: usize) -> MultiHeadAttention {
        MultiHeadAttention::new(format!("dec.{layer}.self_attn"), self.config.heads)
    }

    fn dec_cross_attn(&self, layer: usize) -> MultiHeadAttention {
        MultiHeadAttention::new(format!("dec.{layer}.cross_attn"), self.config.heads)
    }

    /// Fresh Xavier-initialized parameters seeded from the configuration.
    pub fn init_params<T: Scalar>(&self) -> Result<ParameterStore<T>> {
        let c = &self.config;
        let d = c.d_model;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParameterStore::new();
        let norm = |store: &mut ParameterStore<T>, name: String| -> Result<()> {
            store.insert(format!("{name}.gain"), Matrix::filled(1, d, T::one()))?;
            store.insert(format!("{name}.bias"), Matrix::zeros(1, d))?;
            Ok(())
        };

        for side in ["enc", "dec"] {
            store.insert(format!("{side}.embed.w"), xavier_uniform(c.input_dim, d, &mut rng))?;
            store.insert(format!("{side}.embed.b"), Matrix::zeros(1, d))?;
        }
        store.insert("dec.start", xavier_uniform(1, d, &mut rng))?;
        for i in 0..c.layers {
            self.enc_attn(i).init_params(&mut store, d, &mut rng)?;
            norm(&mut store, format!("enc.{i}.ln1"))?;
            ffn_init(&mut store, &format!("enc.{i}.ffn"), d, c.d_ff, &mut rng)?;
            norm(&mut store, format!("enc.{i}.ln2"))?;
        }
        for i in 0..c.layers {
            self.dec_self_attn(i).init_params(&mut store, d, &mut rng)?;
            norm(&mut store, format!("dec.{i}.ln1"))?;
            self.dec_cross_attn(i).init_params(&mut store, d, &mut rng)?;
            norm(&mut store, format!("dec.{i}.ln2"))?;
            ffn_init(&mut store, &format!("dec.{i}.ffn"), d, c.d_ff, &mut rng)?;
            norm(&mut store, format!("dec.{i}.ln3"))?;
        }
        store.insert("head.w", xavier_uniform(d, c.max_len, &mut rng))?;
        store.insert("head.b", Matrix::zeros(1, c.max_len))?;
        Ok(store)
    }

    /// Encoder attention pattern for a video of `valid_len` frames padded to
    /// `seq_len`.
    pub fn pattern(&self, seq_len: usize, valid_len: usize, shots: &[Shot]) -> Result<SparsityPattern> {
        let c = &self.config;
        SparsityPattern::encoder(c.pattern, seq_len, valid_len, c.window, shots, c.globals())
    }

    /// Linear projection of raw features to the model width plus position
    /// encoding. `side` is `"enc"` or `"dec"`.
    pub fn embed<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        features: NodeId,
        side: &str,
    ) -> Result<NodeId> {
        let cols = tape.value(features).cols();
        if cols != self.config.input_dim {
            return Err(Error::dims("embed", tape.value(features).shape(), (cols, self.config.input_dim)));
        }
        let w = tape.param(store, &format!("{side}.embed.w"))?;
        let b = tape.param(store, &format!("{side}.embed.b"))?;
        let z = tape.linear(features, w, b)?;
        let pe = tape.constant(positional_encoding(tape.value(z).rows(), self.config.d_model));
        tape.add(z, pe)
    }

    fn add_norm<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: NodeId,
        residual: NodeId,
        name: &str,
    ) -> Result<NodeId> {
        let sum = tape.add(x, residual)?;
        let gain = tape.param(store, &format!("{name}.gain"))?;
        let bias = tape.param(store, &format!("{name}.bias"))?;
        tape.layer_norm(sum, gain, bias)
    }

    fn ffn<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: NodeId, name: &str) -> Result<NodeId> {
        let w1 = tape.param(store, &format!("{name}.w1"))?;
        let b1 = tape.param(store, &format!("{name}.b1"))?;
        let w2 = tape.param(store, &format!("{name}.w2"))?;
        let b2 = tape.param(store, &format!("{name}.b2"))?;
        let h = tape.linear(x, w1, b1)?;
        let h = tape.relu(h);
        tape.linear(h, w2, b2)
    }

    /// One encoder layer; returns the output and the attention node.
    pub fn encoder_layer<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        layer: usize,
        x: NodeId,
        pattern: &Arc<SparsityPattern>,
    ) -> Result<(NodeId, NodeId)> {
        let attn = self.enc_attn(layer).forward(tape, store, x, x, pattern.clone())?;
        let x1 = self.add_norm(tape, store, attn.output, x, &format!("enc.{layer}.ln1"))?;
        let f = self.ffn(tape, store, x1, &format!("enc.{layer}.ffn"))?;
        let x2 = self.add_norm(tape, store, f, x1, &format!("enc.{layer}.ln2"))?;
        Ok((x2, attn.attention))
    }

    /// One decoder layer over `s` (L × d) with the encoder output `y_enc`
    /// as keys and values of the cross attention.
    pub fn decoder_layer<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        layer: usize,
        s: NodeId,
        y_enc: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let d_enc = tape.value(y_enc).cols();
        let d_dec = tape.value(s).cols();
        if d_enc != d_dec {
            return Err(Error::dims("decoder_layer", tape.value(s).shape(), tape.value(y_enc).shape()));
        }
        let l = tape.value(s).rows();
        let t = tape.value(y_enc).rows();
        let causal = Arc::new(SparsityPattern::causal(l));
        let cross = Arc::new(SparsityPattern::cross(l, t, t)?);

        let sa = self.dec_self_attn(layer).forward(tape, store, s, s, causal)?;
        let s1 = self.add_norm(tape, store, sa.output, s, &format!("dec.{layer}.ln1"))?;
        let ca = self.dec_cross_attn(layer).forward(tape, store, s1, y_enc, cross)?;
        let s2 = self.add_norm(tape, store, ca.output, s1, &format!("dec.{layer}.ln2"))?;
        let f = self.ffn(tape, store, s2, &format!("dec.{layer}.ffn"))?;
        let s3 = self.add_norm(tape, store, f, s2, &format!("dec.{layer}.ln3"))?;
        Ok((s3, sa.attention, ca.attention))
    }

    /// Linear map to `max_len` logits restricted to the first `t` columns,
    /// followed by a row softmax.
    pub fn output_head<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        y_dec: NodeId,
        t: usize,
    ) -> Result<NodeId> {
        if t == 0 || t > self.config.max_len {
            return Err(Error::Precondition(format!(
                "video length {t} outside 1..={}",
                self.config.max_len
            )));
        }
        let w = tape.param(store, "head.w")?;
        let b = tape.param(store, "head.b")?;
        let w = tape.slice_cols(w, 0, t)?;
        let b = tape.slice_cols(b, 0, t)?;
        let logits = tape.linear(y_dec, w, b)?;
        tape.softmax_rows(logits)
    }

    /// Runs the encoder stack over the valid prefix of `features`.
    ///
    /// `features` may carry padding rows beyond `valid_len`; the pattern
    /// disconnects them, so they never enter the computation.
    pub fn encode_on<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        valid_len: usize,
        shots: &[Shot],
    ) -> Result<EncoderTrace> {
        self.check_video(features, valid_len)?;
        let pattern = Arc::new(self.pattern(valid_len, valid_len, shots)?);
        let x = tape.constant(features.slice_rows(0, valid_len)?);
        let mut x = self.embed(tape, store, x, "enc")?;
        let mut attention = Vec::with_capacity(self.config.layers);
        for i in 0..self.config.layers {
            let (next, a) = self.encoder_layer(tape, store, i, x, &pattern)?;
            x = next;
            attention.push(a);
        }
        Ok(EncoderTrace { output: x, pattern, attention })
    }

    /// Decoder input rows: the learned start token, then the embedded
    /// features of `frames` (the previously emitted frames).
    pub fn decoder_input<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        frames: &[usize],
    ) -> Result<NodeId> {
        let start = tape.param(store, "dec.start")?;
        let d = self.config.d_model;
        let rows = if frames.is_empty() {
            start
        } else {
            let x = tape.constant(features.select_rows(frames)?);
            let w = tape.param(store, "dec.embed.w")?;
            let b = tape.param(store, "dec.embed.b")?;
            let z = tape.linear(x, w, b)?;
            tape.concat_rows(&[start, z])?
        };
        let pe = tape.constant(positional_encoding(frames.len() + 1, d));
        tape.add(rows, pe)
    }

    /// Runs the decoder stack and output head.
    pub fn decode_on<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        input: NodeId,
        y_enc: NodeId,
    ) -> Result<DecoderTrace> {
        let t = tape.value(y_enc).rows();
        let mut s = input;
        let mut self_attention = Vec::with_capacity(self.config.layers);
        let mut cross_attention = Vec::with_capacity(self.config.layers);
        for i in 0..self.config.layers {
            let (next, sa, ca) = self.decoder_layer(tape, store, i, s, y_enc)?;
            s = next;
            self_attention.push(sa);
            cross_attention.push(ca);
        }
        let probs = self.output_head(tape, store, s, t)?;
        Ok(DecoderTrace { probs, self_attention, cross_attention })
    }

    /// Teacher-forced pass: row `l` of the output predicts `summary[l]` from
    /// the start token and the ground-truth frames `summary[..l]`.
    pub fn forward_on<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        valid_len: usize,
        shots: &[Shot],
        summary: &[usize],
    ) -> Result<ForwardTrace> {
        if summary.is_empty() {
            return Err(Error::Precondition("teacher summary is empty".into()));
        }
        if let Some(&bad) = summary.iter().find(|&&f| f >= valid_len) {
            return Err(Error::Precondition(format!(
                "summary frame {bad} outside the {valid_len} valid frames"
            )));
        }
        let encoder = self.encode_on(tape, store, features, valid_len, shots)?;
        let input = self.decoder_input(tape, store, features, &summary[..summary.len() - 1])?;
        let decoder = self.decode_on(tape, store, input, encoder.output)?;
        Ok(ForwardTrace { encoder, decoder, source: DecoderSource::GroundTruth })
    }

    /// Teacher-forced `|summary| × valid_len` output distribution.
    pub fn forward<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        valid_len: usize,
        shots: &[Shot],
        summary: &[usize],
    ) -> Result<Matrix<T>> {
        let mut tape = Tape::inference();
        let trace = self.forward_on(&mut tape, store, features, valid_len, shots, summary)?;
        Ok(tape.value(trace.decoder.probs).clone())
    }

    pub fn encode<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        features: &Matrix<T>,
        valid_len: usize,
        shots: &[Shot],
    ) -> Result<EncodedVideo<T>> {
        let mut tape = Tape::inference();
        let trace = self.encode_on(&mut tape, store, features, valid_len, shots)?;
        Ok(EncodedVideo {
            output: tape.value(trace.output).pad_rows(features.rows())?,
            valid_len,
            pattern: trace.pattern,
            features: features.slice_rows(0, valid_len)?,
        })
    }

    /// Free-running decode: each step feeds back the arg-max frame of the
    /// previous step; a frame's score folds its probability over all steps.
    pub fn decode_autoregressive<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        video: &EncodedVideo<T>,
    ) -> Result<Vec<f64>> {
        Ok(self.decode_sequence(store, video)?.0)
    }

    /// Like [`Self::decode_autoregressive`], also returning the emitted frames.
    pub fn decode_sequence<T: Scalar>(
        &self,
        store: &ParameterStore<T>,
        video: &EncodedVideo<T>,
    ) -> Result<(Vec<f64>, Vec<usize>)> {
        let t = video.valid_len;
        let steps = self.config.decode_steps(t);
        let mut scores = vec![0.0f64; t];
        let mut emitted = Vec::with_capacity(steps);
        let y_enc = video.output.slice_rows(0, t)?;
        for _ in 0..steps {
            let mut tape = Tape::inference();
            let y = tape.constant(y_enc.clone());
            let input = self.decoder_input(&mut tape, store, &video.features, &emitted)?;
            let dec = self.decode_on(&mut tape, store, input, y)?;
            let probs = tape.value(dec.probs);
            let last = probs.row(probs.rows() - 1);
            let mut best = 0;
            for (n, &p) in last.iter().enumerate() {
                let p64 = p.to_f64_lossy();
                match self.config.step_aggregation {
                    StepAggregation::Max => scores[n] = scores[n].max(p64),
                    StepAggregation::Mean => scores[n] += p64 / steps as f64,
                }
                if p > last[best] {
                    best = n;
                }
            }
            emitted.push(best);
        }
        Ok((scores, emitted))
    }

    fn check_video<T: Scalar>(&self, features: &Matrix<T>, valid_len: usize) -> Result<()> {
        if features.cols() != self.config.input_dim {
            return Err(Error::dims("features", features.shape(), (features.rows(), self.config.input_dim)));
        }
        if valid_len == 0 || valid_len > features.rows() || valid_len > self.config.max_len {
            return Err(Error::Precondition(format!(
                "valid_len {valid_len} must lie in 1..={} (rows {}, max_len {})",
                features.rows().min(self.config.max_len),
                features.rows(),
                self.config.max_len
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("features".into()));
        }
        Ok(())
    }
}

fn ffn_init<T: Scalar>(
    store: &mut ParameterStore<T>,
    name: &str,
    d: usize,
    d_ff: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    store.insert(format!("{name}.w1"), xavier_uniform(d, d_ff, rng))?;
    store.insert(format!("{name}.b1"), Matrix::zeros(1, d_ff))?;
    store.insert(format!("{name}.w2"), xavier_uniform(d_ff, d, rng))?;
    store.insert(format!("{name}.b2"), Matrix::zeros(1, d))?;
    Ok(())
}
