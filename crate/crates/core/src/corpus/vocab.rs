use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::record::ReviewRecord;
use super::tokenize::tokenize;
use super::tokens::{self, category_token, EOS_ID, PAD_ID, SOS_ID, UNK_ID};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_FREQ: usize = 2;

/// Bijective token/id map shared by the encoder and decoder.
///
/// Layout: the four specials at ids 0..4, rating tokens `<1>`..`<5>`, the
/// placeholder tokens, one `<cat:NAME>` per category (sorted by name),
/// then corpus words by descending frequency with ties broken
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_freq: usize,
    tokens: Vec<String>,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;

    fn try_from(file: VocabFile) -> Result<Self> {
        Vocabulary::from_tokens(file.tokens, file.min_freq)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            min_freq: v.min_freq,
            tokens: v.tokens,
        }
    }
}

/// `<1>` .. `<5>`
pub fn rating_token(rating: i64) -> Result<String> {
    if (1..=5).contains(&rating) {
        Ok(format!("<{rating}>"))
    } else {
        Err(Error::Rating(rating))
    }
}

impl Vocabulary {
    /// Build over both sides of an already-normalized corpus.
    pub fn build(corpus: &[ReviewRecord], min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut categories = BTreeSet::new();
        for record in corpus {
            categories.insert(record.category.clone());
            for text in [&record.review_text, &record.response_text] {
                for tok in tokenize(text) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }

        let mut tokens: Vec<String> = reserved_tokens();
        tokens.extend(categories.iter().map(|c| category_token(c)));
        let reserved: std::collections::HashSet<String> = tokens.iter().cloned().collect();

        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(tok, n)| *n >= min_freq.max(1) && !reserved.contains(tok))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        tokens.extend(words.into_iter().map(|(t, _)| t));

        Self::from_tokens(tokens, min_freq).expect("construction yields unique tokens")
    }

    /// Rebuild from an id-ordered token list, checking the reserved layout.
    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        let reserved = reserved_tokens();
        if tokens.len() < reserved.len() || tokens[..reserved.len()] != reserved[..] {
            return Err(Error::Config(
                "vocabulary does not start with the reserved special, rating and placeholder tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {tok:?}")));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self {
            tokens,
            index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<unk>`.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<&str>> {
        ids.iter()
            .map(|&id| {
                self.token(id).ok_or(Error::TokenId {
                    id,
                    size: self.len(),
                })
            })
            .collect()
    }

    pub fn rating_id(&self, rating: i64) -> Result<usize> {
        let tok = rating_token(rating)?;
        Ok(self.get(&tok).expect("rating tokens are reserved"))
    }

    pub fn category_id(&self, category: &str) -> Result<usize> {
        self.get(&category_token(category))
            .ok_or_else(|| Error::UnknownCategory(category.to_owned()))
    }

    /// Category names in id order.
    pub fn categories(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter_map(|t| t.strip_prefix("<cat:").and_then(|t| t.strip_suffix('>')))
            .collect()
    }

    pub fn pad_id(&self) -> usize {
        PAD_ID
    }

    pub fn sos_id(&self) -> usize {
        SOS_ID
    }

    pub fn eos_id(&self) -> usize {
        EOS_ID
    }

    /// One token per line, in id order.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R, min_freq: usize) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io("<vocabulary>", e))?;
            if !line.is_empty() {
                tokens.push(line);
            }
        }
        Self::from_tokens(tokens, min_freq)
    }
}

fn reserved_tokens() -> Vec<String> {
    let mut out: Vec<String> = tokens::SPECIALS.iter().map(|s| s.to_string()).collect();
    out.extend((1..=5).map(|r| format!("<{r}>")));
    out.extend(tokens::PLACEHOLDERS.iter().map(|s| s.to_string()));
    out
}
