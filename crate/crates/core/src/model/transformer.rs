use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::layers::{Dropout, Graph};
use super::params::Parameters;
use crate::corpus::tokens::PAD_ID;
use crate::corpus::{EncodedRecord, EncodedReview};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Encoder states for one review plus the key mask the decoder's
/// cross-attention must respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    pub states: Tensor,
    pub key_valid: Vec<bool>,
}

/// How a training forward pass treats dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout on, seeded by `(seed, step)`; each example in the batch gets
    /// its own stream.
    Train { seed: u64, step: u64 },
}

#[derive(Debug)]
pub struct BatchOutput {
    /// Mean cross-entropy over all non-pad target positions of the batch.
    pub loss: f64,
    /// Per-example `T_max × V` logits (padded rows included).
    pub logits: Vec<Tensor>,
    pub tokens: usize,
    pub gradients: Option<Parameters>,
}

/// A batch of encoded records padded to common lengths.
#[derive(Clone, Debug)]
pub struct PaddedBatch {
    pub examples: Vec<PaddedExample>,
    pub tokens: usize,
}

#[derive(Clone, Debug)]
pub struct PaddedExample {
    pub src: Vec<usize>,
    pub src_len: usize,
    pub rating: usize,
    pub category: usize,
    pub decoder_input: Vec<usize>,
    pub labels: Vec<usize>,
}

impl PaddedBatch {
    pub fn new(records: &[EncodedRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("empty batch"));
        }
        let src_max = records.iter().map(|r| r.review.src.len()).max().unwrap_or(0);
        let tgt_max = records.iter().map(|r| r.tgt.len() - 1).max().unwrap_or(0);
        let pad = |ids: &[usize], to: usize| {
            let mut v = ids.to_vec();
            v.resize(to, PAD_ID);
            v
        };
        let examples: Vec<PaddedExample> = records
            .iter()
            .map(|r| PaddedExample {
                src: pad(&r.review.src, src_max),
                src_len: r.review.src.len(),
                rating: r.review.rating,
                category: r.review.category,
                decoder_input: pad(r.decoder_input(), tgt_max),
                labels: pad(r.labels(), tgt_max),
            })
            .collect();
        let tokens = examples
            .iter()
            .map(|e| e.labels.iter().filter(|&&l| l != PAD_ID).count())
            .sum();
        if tokens == 0 {
            return Err(Error::Empty("batch has no target tokens"));
        }
        Ok(Self { examples, tokens })
    }
}

/// Parameters plus the configuration that shapes them.
#[derive(Clone, Debug, PartialEq)]
pub struct Transformer {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl Transformer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = Parameters::init(&config, config.seed)?;
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        Ok(Self { config, params })
    }

    /// Run the encoder on one review (no dropout).
    pub fn encode(&self, review: &EncodedReview) -> Result<EncoderOutput> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let mut g = Graph::new(&mut tape, &vars, &self.config, Dropout::eval());
        let (x, key_valid) = g.embed_review(&review.src, review.src.len(), review.rating, review.category)?;
        let states = g.encode(x, &key_valid)?;
        Ok(EncoderOutput {
            states: tape.value(states).clone(),
            key_valid,
        })
    }

    /// Encoder input `X` for one review, before the encoder stack.
    pub fn embed_review(&self, review: &EncodedReview) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let mut g = Graph::new(&mut tape, &vars, &self.config, Dropout::eval());
        let (x, _) = g.embed_review(&review.src, review.src.len(), review.rating, review.category)?;
        Ok(tape.value(x).clone())
    }

    /// `T × V` logits for decoder input `tgt_in` against fixed encoder
    /// states.
    pub fn decoder_forward(&self, tgt_in: &[usize], memory: &EncoderOutput) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let mem = tape.leaf(memory.states.clone());
        let mut g = Graph::new(&mut tape, &vars, &self.config, Dropout::eval());
        let logits = g.decode(tgt_in, mem, &memory.key_valid)?;
        Ok(tape.value(logits).clone())
    }

    /// Teacher-forced loss over a batch. Examples run on independent tapes
    /// (in parallel when `with_gradients`); contributions are reduced in
    /// batch order so results do not depend on scheduling.
    pub fn forward_training(&self, records: &[EncodedRecord], mode: Mode, with_gradients: bool) -> Result<BatchOutput> {
        let batch = PaddedBatch::new(records)?;
        let total = batch.tokens as f64;
        let run = |(i, ex): (usize, &PaddedExample)| -> Result<(f64, Tensor, Option<Vec<Tensor>>)> {
            let mut tape = Tape::new();
            let vars = self.params.bind(&mut tape);
            let dropout = match mode {
                Mode::Eval => Dropout::eval(),
                Mode::Train { seed, step } => {
                    Dropout::train(self.config.dropout, seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15), i as u64)
                }
            };
            let (loss, logits) = example_loss(&mut tape, &vars, &self.config, dropout, ex, total)?;
            let value = tape.scalar(loss);
            let logits = tape.value(logits).clone();
            let grads = if with_gradients {
                let mut g = tape.backward(loss)?;
                Some(vars.leaves().into_iter().map(|&v| g.take(v)).collect())
            } else {
                None
            };
            Ok((value, logits, grads))
        };
        let parts: Vec<_> = if with_gradients {
            batch.examples.par_iter().enumerate().map(run).collect::<Result<_>>()?
        } else {
            batch.examples.iter().enumerate().map(run).collect::<Result<_>>()?
        };

        let mut loss = 0.0;
        let mut logits = Vec::with_capacity(parts.len());
        let mut acc: Option<Vec<Tensor>> = None;
        for (l, lg, g) in parts {
            loss += l;
            logits.push(lg);
            if let Some(g) = g {
                match &mut acc {
                    None => acc = Some(g),
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("batch loss {loss}")));
        }
        let gradients = acc.map(|g| self.params.rebuild(&g)).transpose()?;
        Ok(BatchOutput {
            loss,
            logits,
            tokens: batch.tokens,
            gradients,
        })
    }
}

/// Loss of one padded example, already weighted by its share of the
/// batch's target tokens, plus its logits.
fn example_loss(
    tape: &mut Tape,
    vars: &Parameters<Var>,
    config: &ModelConfig,
    dropout: Dropout,
    ex: &PaddedExample,
    batch_tokens: f64,
) -> Result<(Var, Var)> {
    let mut g = Graph::new(tape, vars, config, dropout);
    let (x, key_valid) = g.embed_review(&ex.src, ex.src_len, ex.rating, ex.category)?;
    let memory = g.encode(x, &key_valid)?;
    let logits = g.decode(&ex.decoder_input, memory, &key_valid)?;
    let count = ex.labels.iter().filter(|&&l| l != PAD_ID).count();
    let mean = tape.cross_entropy(logits, &ex.labels, PAD_ID)?;
    Ok((tape.scale(mean, count as f64 / batch_tokens), logits))
}

/// Whole-batch loss recorded on a single tape, for gradient checking.
pub fn batch_loss_on_tape(
    tape: &mut Tape,
    vars: &Parameters<Var>,
    config: &ModelConfig,
    records: &[EncodedRecord],
) -> Result<Var> {
    let batch = PaddedBatch::new(records)?;
    let total = batch.tokens as f64;
    let mut loss: Option<Var> = None;
    for ex in &batch.examples {
        let (l, _) = example_loss(tape, vars, config, Dropout::eval(), ex, total)?;
        loss = Some(match loss {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    Ok(loss.expect("batch is non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FusionVariant;

    fn tiny(variant: FusionVariant) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout: 0.0,
            fusion_variant: variant,
            max_src_len: 10,
            max_tgt_len: 10,
            seed: 11,
            ..ModelConfig::new(20)
        }
    }

    fn record(src: &[usize], rating: usize, tgt: &[usize]) -> EncodedRecord {
        let mut full = vec![2];
        full.extend_from_slice(tgt);
        full.push(3);
        EncodedRecord {
            review: EncodedReview {
                src: src.to_vec(),
                rating,
                category: 13,
            },
            tgt: full,
        }
    }

    #[test]
    fn encoder_preserves_length() {
        let m = Transformer::new(tiny(FusionVariant::TrrgenOrder)).unwrap();
        let out = m.encode(&record(&[14, 15, 16], 5, &[]).review).unwrap();
        assert_eq!(out.states.rows(), 5);
        assert_eq!(out.key_valid.len(), 5);
    }

    #[test]
    fn single_step_decoder() {
        let m = Transformer::new(tiny(FusionVariant::Vanilla)).unwrap();
        let mem = m.encode(&record(&[14, 15], 5, &[]).review).unwrap();
        let logits = m.decoder_forward(&[2], &mem).unwrap();
        assert_eq!(logits.shape(), [1, 20]);
        assert!(m.decoder_forward(&[2; 11], &mem).is_err());
    }

    #[test]
    fn uniform_logits_give_log_vocab_loss() {
        let mut m = Transformer::new(tiny(FusionVariant::Vanilla)).unwrap();
        if let Some(w) = &mut m.params.output_w {
            *w = Tensor::zeros(8, 20);
        }
        let out = m
            .forward_training(&[record(&[14, 15], 5, &[16, 17])], Mode::Eval, false)
            .unwrap();
        assert!((out.loss - 20f64.ln()).abs() < 1e-12);
        assert_eq!(out.tokens, 3);
    }

    #[test]
    fn duplicated_batch_keeps_mean_loss() {
        let m = Transformer::new(tiny(FusionVariant::TrrgenConcat)).unwrap();
        let batch = vec![record(&[14, 15, 16], 4, &[17]), record(&[18], 6, &[14, 15, 19])];
        let once = m.forward_training(&batch, Mode::Eval, false).unwrap();
        let twice_batch: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let twice = m.forward_training(&twice_batch, Mode::Eval, false).unwrap();
        assert!((once.loss - twice.loss).abs() < 1e-12);
    }

    #[test]
    fn padding_does_not_change_an_example() {
        let m = Transformer::new(tiny(FusionVariant::TrrgenConcat)).unwrap();
        let short = record(&[14], 4, &[17]);
        let long = record(&[14, 15, 16, 18], 6, &[14, 15, 19, 19]);
        let alone = m.forward_training(&[short.clone()], Mode::Eval, false).unwrap();
        let padded = m.forward_training(&[short, long], Mode::Eval, false).unwrap();
        // Unpadded rows of the short example's logits are unchanged.
        let a = &alone.logits[0];
        let b = &padded.logits[0];
        for r in 0..a.rows() {
            for (x, y) in a.row(r).iter().zip(b.row(r)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let m = Transformer::new(tiny(FusionVariant::Vanilla)).unwrap();
        assert!(matches!(m.forward_training(&[], Mode::Eval, false), Err(Error::Empty(_))));
    }

    #[test]
    fn gradients_match_single_tape() {
        let m = Transformer::new(tiny(FusionVariant::TrrgenSum)).unwrap();
        let batch = vec![record(&[14, 15, 16], 4, &[17]), record(&[18], 6, &[14, 15, 19])];
        let out = m.forward_training(&batch, Mode::Eval, true).unwrap();
        let mut tape = Tape::new();
        let vars = m.params.bind(&mut tape);
        let loss = batch_loss_on_tape(&mut tape, &vars, &m.config, &batch).unwrap();
        assert!((tape.scalar(loss) - out.loss).abs() < 1e-12);
        let g = tape.backward(loss).unwrap();
        let grads = out.gradients.unwrap();
        for (v, t) in vars.leaves().into_iter().zip(grads.leaves()) {
            let a = g.get(*v);
            for (x, y) in a.data().iter().zip(t.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_mode_is_seeded() {
        let config = ModelConfig {
            dropout: 0.3,
            ..tiny(FusionVariant::TrrgenConcat)
        };
        let m = Transformer::new(config).unwrap();
        let batch = vec![record(&[14, 15, 16], 4, &[17, 18])];
        let a = m.forward_training(&batch, Mode::Train { seed: 1, step: 4 }, false).unwrap();
        let b = m.forward_training(&batch, Mode::Train { seed: 1, step: 4 }, false).unwrap();
        let c = m.forward_training(&batch, Mode::Train { seed: 1, step: 5 }, false).unwrap();
        let e = m.forward_training(&batch, Mode::Eval, false).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_ne!(a.loss, c.loss);
        assert_ne!(a.loss, e.loss);
    }
}
