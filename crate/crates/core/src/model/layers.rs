//! The Transformer building blocks, expressed as tape operations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{FusionVariant, ModelConfig};
use super::params::{AttentionParams, FeedForwardParams, NormParams, Parameters};
use crate::error::{Error, Result};
use crate::numerics::{Mask, Tape, Tensor, Var};

/// Sinusoidal position table: `PE(pos, 2i) = sin(pos / 10000^(2i/d))`,
/// `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Config(format!("positional encoding needs an even d_model, got {d_model}")));
    }
    if seq_len == 0 {
        return Err(Error::Config("positional encoding needs seq_len >= 1".into()));
    }
    let mut pe = Tensor::zeros(seq_len, d_model);
    for pos in 0..seq_len {
        let row = pe.row_mut(pos);
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            row[2 * i] = angle.sin();
            row[2 * i + 1] = angle.cos();
        }
    }
    Ok(pe)
}

/// Dropout switch carried through a forward pass. `eval()` is the identity.
#[derive(Debug)]
pub struct Dropout {
    p: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    pub fn eval() -> Self {
        Self { p: 0.0, rng: None }
    }

    /// Training mode with its own random stream, so parallel examples stay
    /// deterministic.
    pub fn train(p: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { p, rng: Some(rng) }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) if self.p > 0.0 => tape.dropout(x, self.p, true, rng),
            _ => Ok(x),
        }
    }
}

/// Output of a multi-head attention call: `Z` and each head's attention
/// weights (`|queries| × |keys|`).
#[derive(Debug)]
pub struct Attention {
    pub output: Var,
    pub weights: Vec<Var>,
}

/// One forward pass over a parameter set bound to a tape.
pub struct Graph<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a Parameters<Var>,
    pub config: &'a ModelConfig,
    pub dropout: Dropout,
}

impl<'a> Graph<'a> {
    pub fn new(tape: &'a mut Tape, params: &'a Parameters<Var>, config: &'a ModelConfig, dropout: Dropout) -> Self {
        Self {
            tape,
            params,
            config,
            dropout,
        }
    }

    fn positions(&mut self, n: usize) -> Result<Var> {
        let pe = positional_encoding(n, self.config.d_model)?;
        Ok(self.tape.leaf(pe))
    }

    /// Build the encoder input `X` for one review. `src` may carry trailing
    /// padding; the returned mask flags which of the `X` rows are real.
    pub fn embed_review(
        &mut self,
        src: &[usize],
        valid_len: usize,
        rating: usize,
        category: usize,
    ) -> Result<(Var, Vec<bool>)> {
        if src.is_empty() || valid_len == 0 || valid_len > src.len() {
            return Err(Error::shape("embed_review", format!("{valid_len} valid of {} ids", src.len())));
        }
        if valid_len > self.config.max_src_len {
            return Err(Error::shape(
                "embed_review",
                format!("review of {valid_len} tokens exceeds max_src_len {}", self.config.max_src_len),
            ));
        }
        let variant = self.config.fusion_variant;
        let table = self.params.embedding;
        let words = self.tape.embedding(table, src)?;
        let pos = self.positions(src.len())?;
        let mut x = self.tape.add(words, pos)?;

        let r = self.tape.embedding(table, &[rating])?;
        let c = self.tape.embedding(table, &[category])?;
        match variant {
            FusionVariant::RatingOnly | FusionVariant::TrrgenConcat => {
                x = self.tape.add(x, r)?;
            }
            FusionVariant::TrrgenSum => {
                x = self.tape.add(x, r)?;
                x = self.tape.add(x, c)?;
            }
            FusionVariant::Vanilla | FusionVariant::CategoryOnly | FusionVariant::TrrgenOrder => {}
        }
        let fused = match variant {
            FusionVariant::CategoryOnly | FusionVariant::TrrgenConcat => self.tape.concat_rows(&[c, x])?,
            FusionVariant::TrrgenOrder => self.tape.concat_rows(&[c, r, x])?,
            _ => x,
        };
        let prefix = variant.prefix_len();
        let valid = (0..prefix + src.len()).map(|i| i < prefix + valid_len).collect();
        Ok((fused, valid))
    }

    /// `Concat(head_1..head_h)·W^O` with
    /// `head_i = softmax(Q W_i^Q (K W_i^K)ᵀ / √d_k + mask) · V W_i^V`.
    pub fn multi_head_attention(
        &mut self,
        queries: Var,
        keys: Var,
        mask: &Mask,
        p: &AttentionParams<Var>,
    ) -> Result<Attention> {
        let (nq, nk) = (self.tape.value(queries).rows(), self.tape.value(keys).rows());
        if mask.shape() != [nq, nk] {
            return Err(Error::shape(
                "multi_head_attention",
                format!("mask {:?} for {nq} queries and {nk} keys", mask.shape()),
            ));
        }
        let scale = 1.0 / (self.config.d_k() as f64).sqrt();
        let mut heads = Vec::with_capacity(p.w_q.len());
        let mut weights = Vec::with_capacity(p.w_q.len());
        for h in 0..p.w_q.len() {
            let q = self.tape.matmul(queries, p.w_q[h])?;
            let k = self.tape.matmul(keys, p.w_k[h])?;
            let v = self.tape.matmul(keys, p.w_v[h])?;
            let scores = self.tape.matmul_transposed(q, k)?;
            let scores = self.tape.scale(scores, scale);
            let a = self.tape.masked_softmax(scores, mask)?;
            heads.push(self.tape.matmul(a, v)?);
            weights.push(a);
        }
        let concat = self.tape.concat_cols(&heads)?;
        let output = self.tape.matmul(concat, p.w_o)?;
        Ok(Attention { output, weights })
    }

    /// `max(0, x·W₁ + b₁)·W₂ + b₂`, row by row.
    pub fn feed_forward(&mut self, x: Var, p: &FeedForwardParams<Var>) -> Result<Var> {
        let h = self.tape.matmul(x, p.w1)?;
        let h = self.tape.add(h, p.b1)?;
        let h = self.tape.relu(h);
        let y = self.tape.matmul(h, p.w2)?;
        self.tape.add(y, p.b2)
    }

    /// Post-norm residual: `LayerNorm(x + dropout(f(x)))`.
    pub fn sublayer_connect(&mut self, x: Var, fx: Var, norm: &NormParams<Var>) -> Result<Var> {
        let fx = self.dropout.apply(self.tape, fx)?;
        let sum = self.tape.add(x, fx)?;
        self.tape.layer_norm(sum, norm.gamma, norm.beta, self.config.layer_norm_eps)
    }

    /// Encoder stack over an embedded input.
    pub fn encode(&mut self, x: Var, key_valid: &[bool]) -> Result<Var> {
        let params = self.params;
        let n = self.tape.value(x).rows();
        let mask = Mask::key_padding(n, key_valid);
        let mut h = self.dropout.apply(self.tape, x)?;
        for layer in &params.encoder {
            let z = self.multi_head_attention(h, h, &mask, &layer.self_attn)?.output;
            h = self.sublayer_connect(h, z, &layer.norm1)?;
            let f = self.feed_forward(h, &layer.ffn)?;
            h = self.sublayer_connect(h, f, &layer.norm2)?;
        }
        Ok(h)
    }

    /// Decoder stack and output projection; returns `T × V` logits.
    pub fn decode(&mut self, tgt_in: &[usize], memory: Var, memory_valid: &[bool]) -> Result<Var> {
        let t = tgt_in.len();
        if t == 0 {
            return Err(Error::shape("decoder_forward", "empty target input"));
        }
        if t > self.config.max_tgt_len {
            return Err(Error::shape(
                "decoder_forward",
                format!("target of {t} exceeds max_tgt_len {}", self.config.max_tgt_len),
            ));
        }
        let params = self.params;
        let words = self.tape.embedding(params.embedding, tgt_in)?;
        let pos = self.positions(t)?;
        let y = self.tape.add(words, pos)?;
        let mut h = self.dropout.apply(self.tape, y)?;

        let causal = Mask::causal(t);
        let cross = Mask::key_padding(t, memory_valid);
        for layer in &params.decoder {
            let z = self.multi_head_attention(h, h, &causal, &layer.self_attn)?.output;
            h = self.sublayer_connect(h, z, &layer.norm1)?;
            let z = self.multi_head_attention(h, memory, &cross, &layer.cross_attn)?.output;
            h = self.sublayer_connect(h, z, &layer.norm2)?;
            let f = self.feed_forward(h, &layer.ffn)?;
            h = self.sublayer_connect(h, f, &layer.norm3)?;
        }
        let logits = match params.output_w {
            Some(w) => self.tape.matmul(h, w)?,
            None => self.tape.matmul_transposed(h, params.embedding)?,
        };
        self.tape.add(logits, params.output_b)
    }
}
