//! Dataset ingestion and text preparation: loading review/response files,
//! placeholder normalization, boilerplate-sentence detection, vocabulary
//! construction, encoding, and splitting.

pub mod ads;
pub mod encode;
pub mod normalize;
pub mod record;
pub mod split;
pub mod synthetic;
pub mod tokenize;
pub mod tokens;
pub mod vocab;

pub use ads::{ad_report, filter_ads, mid_ngram, read_blocklist, split_sentences, Expression, NgramEntry, NgramReport};
pub use encode::{encode_record, encode_review, EncodedRecord, EncodedReview};
pub use normalize::{default_rules, normalize_record, normalize_text, PlaceholderRule, PreprocessConfig};
pub use record::{load_corpus, read_corpus, write_corpus, CorpusFormat, ReviewRecord};
pub use split::{split_corpus, Splits};
pub use tokenize::tokenize;
pub use vocab::{rating_token, Vocabulary, DEFAULT_MIN_FREQ};
