//! BLEU scoring, the random-selection baseline, and model evaluation
//! reports.

pub mod bleu;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{encode_review, tokenize, PreprocessConfig, ReviewRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::generation::{decode_all, DecodeConfig};
use crate::model::Transformer;

pub use bleu::{brevity_penalty, corpus_bleu, corpus_stats, modified_precision, sentence_bleu, BleuReport, BleuStats};

/// One uniformly drawn training response per test record, with
/// replacement.
pub fn random_selection_baseline<S: Clone>(pool: &[S], n: usize, seed: u64) -> Result<Vec<S>> {
    if pool.is_empty() {
        return Err(Error::Empty("random-selection pool"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect())
}

/// Hex SHA-256 of any serializable configuration.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// One machine-readable evaluation row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub pairs: usize,
    /// Precisions are corpus-level clipped counts, not sentence averages.
    pub precision_level: String,
    #[serde(flatten)]
    pub bleu: BleuReport,
    pub config_digest: String,
}

impl EvalReport {
    pub fn new(variant: impl Into<String>, pairs: usize, bleu: BleuReport, config_digest: impl Into<String>) -> Self {
        Self {
            variant: variant.into(),
            pairs,
            precision_level: "corpus".into(),
            bleu,
            config_digest: config_digest.into(),
        }
    }
}

/// Decoded responses next to their references, both as token lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub candidates: Vec<Vec<String>>,
    pub references: Vec<Vec<String>>,
    pub bleu: BleuReport,
}

/// Reference tokens for a normalized record, tokenized exactly as for
/// training (no truncation).
pub fn reference_tokens(record: &ReviewRecord) -> Vec<String> {
    tokenize(&record.response_text)
}

/// Decode every (normalized) test review and score against its response.
pub fn evaluate_model(
    model: &Transformer,
    vocab: &Vocabulary,
    records: &[ReviewRecord],
    decode: &DecodeConfig,
    preprocess: &PreprocessConfig,
) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    if vocab.len() != model.config.vocab_size {
        return Err(Error::Config(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    let reviews = records
        .iter()
        .map(|r| encode_review(r, vocab, preprocess))
        .collect::<Result<Vec<_>>>()?;
    let decoded = decode_all(model, &reviews, decode)?;
    let candidates = decoded
        .iter()
        .map(|ids| candidate_tokens(ids, vocab))
        .collect::<Result<Vec<_>>>()?;
    let references: Vec<Vec<String>> = records.iter().map(reference_tokens).collect();
    let bleu = corpus_bleu(&candidates, &references)?;
    Ok(Evaluation {
        candidates,
        references,
        bleu,
    })
}

fn candidate_tokens(ids: &[usize], vocab: &Vocabulary) -> Result<Vec<String>> {
    let text = crate::generation::postprocess(ids, vocab)?;
    Ok(text.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect())
}

/// Aligned plain-text table: one row per report, BLEU-4 then p1..p4 and BP.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.variant.len()).chain([7]).max().unwrap_or(7);
    let mut out = format!(
        "{:<width$}  {:>7}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "variant", "BLEU-4", "p1", "p2", "p3", "p4", "BP"
    );
    for r in reports {
        let b = &r.bleu;
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.2}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}  {:>6.4}",
            r.variant, b.bleu, b.precisions[0], b.precisions[1], b.precisions[2], b.precisions[3], b.brevity_penalty
        );
    }
    out
}
