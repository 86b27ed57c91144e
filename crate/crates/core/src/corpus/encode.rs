use serde::{Deserialize, Serialize};

use super::normalize::PreprocessConfig;
use super::record::ReviewRecord;
use super::tokenize::tokenize;
use super::tokens::{EOS_ID, SOS_ID};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Encoder-side inputs for one review.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedReview {
    pub src: Vec<usize>,
    pub rating: usize,
    pub category: usize,
}

/// A review plus its `<sos> response <eos>` target.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedRecord {
    pub review: EncodedReview,
    pub tgt: Vec<usize>,
}

impl EncodedRecord {
    /// Decoder input: the target without its final token.
    pub fn decoder_input(&self) -> &[usize] {
        &self.tgt[..self.tgt.len() - 1]
    }

    /// Decoder labels: the target without `<sos>`.
    pub fn labels(&self) -> &[usize] {
        &self.tgt[1..]
    }
}

/// Encode the review side of a normalized record. The review is cut to
/// `max_review_tokens`.
pub fn encode_review(record: &ReviewRecord, vocab: &Vocabulary, config: &PreprocessConfig) -> Result<EncodedReview> {
    let mut toks = tokenize(&record.review_text);
    if toks.is_empty() {
        return Err(Error::Empty("review has no tokens"));
    }
    toks.truncate(config.max_review_tokens);
    Ok(EncodedReview {
        src: vocab.encode(&toks),
        rating: vocab.rating_id(record.rating)?,
        category: vocab.category_id(&record.category)?,
    })
}

/// Encode a normalized record. At most `max_response_tokens` response
/// tokens are kept; `<sos>` and `<eos>` are always present.
pub fn encode_record(record: &ReviewRecord, vocab: &Vocabulary, config: &PreprocessConfig) -> Result<EncodedRecord> {
    let review = encode_review(record, vocab, config)?;
    let mut toks = tokenize(&record.response_text);
    toks.truncate(config.max_response_tokens);
    let mut tgt = Vec::with_capacity(toks.len() + 2);
    tgt.push(SOS_ID);
    tgt.extend(vocab.encode(&toks));
    tgt.push(EOS_ID);
    Ok(EncodedRecord { review, tgt })
}
