//! Deterministic response decoding: greedy and beam search.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::tokens::{EOS_ID, SOS_ID};
use crate::corpus::{EncodedReview, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{EncoderOutput, Transformer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "beam" => Ok(Strategy::Beam),
            other => Err(Error::Config(format!("unknown decoding strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Maximum generated tokens; `None` means the model's `max_tgt_len`.
    pub max_len: Option<usize>,
    /// Finished hypotheses are ranked by `score / len^length_penalty`.
    pub length_penalty: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            beam_width: 4,
            max_len: None,
            length_penalty: 0.0,
        }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn beam(width: usize) -> Self {
        Self {
            strategy: Strategy::Beam,
            beam_width: width,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if self.max_len == Some(0) {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if !self.length_penalty.is_finite() || self.length_penalty < 0.0 {
            return Err(Error::Config("length_penalty must be a non-negative number".into()));
        }
        Ok(())
    }

    /// Step budget, never more than the decoder can attend over.
    fn steps(&self, model: &Transformer) -> usize {
        let cap = model.config.max_tgt_len;
        self.max_len.map_or(cap, |m| m.min(cap))
    }
}

/// Generated tokens (without `<sos>`/`<eos>`) and their summed
/// log-probability, including the `<eos>` step when one was emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
    pub finished: bool,
}

/// Log-softmax of the final logit row for decoder input `prefix`.
pub fn next_log_probs(model: &Transformer, memory: &EncoderOutput, prefix: &[usize]) -> Result<Vec<f64>> {
    let logits = model.decoder_forward(prefix, memory)?;
    let row = logits.row(logits.rows() - 1);
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(row.iter().map(|v| v - lse).collect())
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_search(model: &Transformer, review: &EncodedReview, config: &DecodeConfig) -> Result<Hypothesis> {
    config.validate()?;
    let memory = model.encode(review)?;
    let mut prefix = vec![SOS_ID];
    let mut score = 0.0;
    for _ in 0..config.steps(model) {
        let lp = next_log_probs(model, &memory, &prefix)?;
        let tok = argmax(&lp);
        score += lp[tok];
        if tok == EOS_ID {
            return Ok(Hypothesis {
                tokens: prefix.split_off(1),
                score,
                finished: true,
            });
        }
        prefix.push(tok);
    }
    Ok(Hypothesis {
        tokens: prefix.split_off(1),
        score,
        finished: false,
    })
}

pub fn greedy_decode(model: &Transformer, review: &EncodedReview, config: &DecodeConfig) -> Result<Vec<usize>> {
    greedy_search(model, review, config).map(|h| h.tokens)
}

struct Candidate {
    total: f64,
    step: f64,
    parent: usize,
    token: usize,
}

/// Candidates ordered by total score, then by the last step's score, then
/// by parent and token index. With one beam this is exactly greedy order.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.total
        .total_cmp(&a.total)
        .then(b.step.total_cmp(&a.step))
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

pub fn beam_search(model: &Transformer, review: &EncodedReview, config: &DecodeConfig) -> Result<Hypothesis> {
    config.validate()?;
    let memory = model.encode(review)?;
    let width = config.beam_width;
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..config.steps(model) {
        let mut candidates = Vec::new();
        for (parent, hyp) in alive.iter().enumerate() {
            let mut prefix = Vec::with_capacity(hyp.tokens.len() + 1);
            prefix.push(SOS_ID);
            prefix.extend_from_slice(&hyp.tokens);
            let lp = next_log_probs(model, &memory, &prefix)?;
            candidates.extend(lp.iter().enumerate().map(|(token, &step)| Candidate {
                total: hyp.score + step,
                step,
                parent,
                token,
            }));
        }
        candidates.sort_by(rank);
        candidates.truncate(width);

        let mut next = Vec::with_capacity(width);
        for c in candidates {
            let mut tokens = alive[c.parent].tokens.clone();
            if c.token == EOS_ID {
                finished.push(Hypothesis {
                    tokens,
                    score: c.total,
                    finished: true,
                });
            } else {
                tokens.push(c.token);
                next.push(Hypothesis {
                    tokens,
                    score: c.total,
                    finished: false,
                });
            }
        }
        alive = next;
        if alive.is_empty() {
            break;
        }
        // Without length normalization scores only fall, so nothing alive
        // can overtake the best finished hypothesis.
        if config.length_penalty == 0.0 {
            let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            let best_alive = alive.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
            if best_done >= best_alive {
                break;
            }
        }
    }

    let normalized = |h: &Hypothesis| {
        if config.length_penalty == 0.0 {
            h.score
        } else {
            let len = (h.tokens.len() + usize::from(h.finished)).max(1) as f64;
            h.score / len.powf(config.length_penalty)
        }
    };
    let mut best: Option<Hypothesis> = None;
    for h in finished.into_iter().chain(alive) {
        if best.as_ref().map_or(true, |b| normalized(&h) > normalized(b)) {
            best = Some(h);
        }
    }
    Ok(best.expect("at least one hypothesis survives"))
}

pub fn beam_decode(model: &Transformer, review: &EncodedReview, config: &DecodeConfig) -> Result<Vec<usize>> {
    beam_search(model, review, config).map(|h| h.tokens)
}

/// Dispatch on `config.strategy`.
pub fn decode(model: &Transformer, review: &EncodedReview, config: &DecodeConfig) -> Result<Vec<usize>> {
    match config.strategy {
        Strategy::Greedy => greedy_decode(model, review, config),
        Strategy::Beam => beam_decode(model, review, config),
    }
}

/// Decode many reviews against one read-only model, in input order.
pub fn decode_all(model: &Transformer, reviews: &[EncodedReview], config: &DecodeConfig) -> Result<Vec<Vec<usize>>> {
    reviews.par_iter().map(|r| decode(model, r, config)).collect()
}

/// Summed log-probability of emitting `tokens` (and `<eos>` if
/// `with_eos`) for `review`.
pub fn sequence_log_prob(model: &Transformer, review: &EncodedReview, tokens: &[usize], with_eos: bool) -> Result<f64> {
    let memory = model.encode(review)?;
    let mut prefix = vec![SOS_ID];
    let mut score = 0.0;
    let targets = tokens.iter().copied().chain(with_eos.then_some(EOS_ID));
    for tok in targets {
        let lp = next_log_probs(model, &memory, &prefix)?;
        score += lp[tok];
        prefix.push(tok);
    }
    Ok(score)
}

/// Space-joined tokens. Placeholders are emitted as-is and control tokens
/// are dropped.
pub fn postprocess(ids: &[usize], vocab: &Vocabulary) -> Result<String> {
    let tokens = vocab.decode(ids)?;
    Ok(tokens
        .into_iter()
        .zip(ids)
        .filter(|(_, &id)| id != SOS_ID && id != EOS_ID && id != vocab.pad_id())
        .map(|(t, _)| t)
        .collect::<Vec<_>>()
        .join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, ReviewRecord};
    use crate::model::{FusionVariant, ModelConfig};
    use crate::numerics::Tensor;

    fn model(seed: u64) -> Transformer {
        Transformer::new(ModelConfig {
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            dropout: 0.0,
            max_src_len: 8,
            max_tgt_len: 12,
            fusion_variant: FusionVariant::TrrgenConcat,
            seed,
            ..ModelConfig::new(24)
        })
        .unwrap()
    }

    fn review() -> EncodedReview {
        EncodedReview {
            src: vec![14, 15, 16],
            rating: 7,
            category: 13,
        }
    }

    #[test]
    fn certain_eos_gives_empty_output() {
        let mut m = model(1);
        m.params.output_b = Tensor::zeros(1, 24);
        m.params.output_b.set(0, EOS_ID, 1e4);
        assert!(greedy_decode(&m, &review(), &DecodeConfig::greedy()).unwrap().is_empty());
        assert!(beam_decode(&m, &review(), &DecodeConfig::beam(3)).unwrap().is_empty());
    }

    #[test]
    fn output_respects_max_len() {
        let mut m = model(2);
        // Never emit <eos>.
        m.params.output_b = Tensor::zeros(1, 24);
        m.params.output_b.set(0, EOS_ID, -1e4);
        for max_len in [1, 3, 5] {
            let config = DecodeConfig {
                max_len: Some(max_len),
                ..DecodeConfig::greedy()
            };
            assert_eq!(greedy_decode(&m, &review(), &config).unwrap().len(), max_len);
            let beam = DecodeConfig {
                max_len: Some(max_len),
                ..DecodeConfig::beam(2)
            };
            assert!(beam_decode(&m, &review(), &beam).unwrap().len() <= max_len);
        }
        let unbounded = greedy_decode(&m, &review(), &DecodeConfig::greedy()).unwrap();
        assert_eq!(unbounded.len(), 12);
    }

    #[test]
    fn width_one_beam_is_greedy() {
        for seed in 0..8 {
            let m = model(seed);
            let g = greedy_search(&m, &review(), &DecodeConfig::greedy()).unwrap();
            let b = beam_search(&m, &review(), &DecodeConfig::beam(1)).unwrap();
            assert_eq!(g.tokens, b.tokens);
            assert_eq!(g.score.to_bits(), b.score.to_bits());
        }
    }

    #[test]
    fn greedy_score_matches_rescoring() {
        let m = model(4);
        let h = greedy_search(&m, &review(), &DecodeConfig::greedy()).unwrap();
        let rescored = sequence_log_prob(&m, &review(), &h.tokens, h.finished).unwrap();
        assert!((rescored - h.score).abs() < 1e-12);
    }

    #[test]
    fn argmax_ties_prefer_lowest_id() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, 0.2]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn config_validation() {
        assert!(DecodeConfig::beam(0).validate().is_err());
        let c = DecodeConfig {
            max_len: Some(0),
            ..DecodeConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!("beam".parse::<Strategy>().unwrap(), Strategy::Beam);
        assert!("sample".parse::<Strategy>().is_err());
    }

    #[test]
    fn postprocess_joins_tokens() {
        let records = [ReviewRecord::new("a", "TOOLS", 5, "x", "thanks for your review , contact <email>")];
        let vocab = Vocabulary::build(&records, 1);
        let ids = vocab.encode(&["thanks", "for", "your", "review"]);
        assert_eq!(postprocess(&ids, &vocab).unwrap(), "thanks for your review");
        let ids = vocab.encode(&["contact", "<email>"]);
        assert_eq!(postprocess(&ids, &vocab).unwrap(), "contact <email>");
        let toks = tokenize(&records[0].response_text);
        let mut ids = vec![SOS_ID];
        ids.extend(vocab.encode(&toks));
        ids.push(EOS_ID);
        assert_eq!(postprocess(&ids, &vocab).unwrap(), toks.join(" "));
    }
}
