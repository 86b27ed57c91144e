//! Detection and removal of boilerplate (advertisement-like) sentences in
//! developer responses.
//!
//! Each response sentence is represented by the `n` consecutive tokens at
//! its middle. Counting those expressions across the corpus surfaces
//! template sentences; a human then curates a blocklist, and sentences whose
//! middle expression is blocked are deleted.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use super::normalize::PreprocessConfig;
use super::record::ReviewRecord;
use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub type Expression = Vec<String>;

#[derive(Clone, Debug, PartialEq)]
pub struct NgramEntry {
    pub expression: Expression,
    pub count: usize,
    /// Index of the first response containing the expression.
    pub example: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NgramReport {
    /// Sorted by count descending, then expression ascending.
    pub entries: Vec<NgramEntry>,
    pub responses: usize,
}

impl NgramReport {
    pub fn flagged(&self) -> impl Iterator<Item = &NgramEntry> {
        self.entries.iter().filter(|e| e.flagged)
    }

    /// `count<TAB>expression` lines.
    pub fn write_tsv<W: Write>(&self, mut out: W, flagged_only: bool) -> std::io::Result<()> {
        for e in &self.entries {
            if flagged_only && !e.flagged {
                continue;
            }
            writeln!(out, "{}\t{}", e.count, e.expression.join(" "))?;
        }
        Ok(())
    }
}

/// Byte spans of the sentences in `text`. A sentence ends at `.`, `!` or
/// `?` followed by whitespace or the end of the text; each span also owns
/// the whitespace after its terminator, so the spans tile the text.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let next = chars.peek().map(|&(_, n)| n);
        if next.map_or(true, char::is_whitespace) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, w)) = chars.peek() {
                if !w.is_whitespace() {
                    break;
                }
                end = j + w.len_utf8();
                chars.next();
            }
            spans.push((start, end));
            start = end;
        }
    }
    if start < text.len() {
        spans.push((start, text.len()));
    }
    spans
}

pub fn split_sentences(text: &str) -> Vec<&str> {
    sentence_spans(text).into_iter().map(|(a, b)| &text[a..b]).collect()
}

/// The `n` consecutive tokens starting at `(len - n) / 2`, or `None` when
/// the sentence is shorter than `n`.
pub fn mid_ngram<S>(tokens: &[S], n: usize) -> Option<&[S]> {
    if n == 0 || tokens.len() < n {
        return None;
    }
    let start = (tokens.len() - n) / 2;
    Some(&tokens[start..start + n])
}

fn sentence_expression(sentence: &str, n: usize) -> Option<Expression> {
    let toks = tokenize(sentence);
    mid_ngram(&toks, n).map(<[String]>::to_vec)
}

/// Count middle expressions over every response sentence and flag those
/// occurring at least `ad_flag_threshold × responses` times.
pub fn ad_report(corpus: &[ReviewRecord], config: &PreprocessConfig) -> NgramReport {
    let n = config.ad_ngram_n;
    let mut counts: HashMap<Expression, (usize, usize)> = HashMap::new();
    for (idx, record) in corpus.iter().enumerate() {
        for sentence in split_sentences(&record.response_text) {
            if let Some(expr) = sentence_expression(sentence, n) {
                counts.entry(expr).or_insert((0, idx)).0 += 1;
            }
        }
    }
    let cutoff = config.ad_flag_threshold * corpus.len() as f64;
    let mut entries: Vec<NgramEntry> = counts
        .into_iter()
        .map(|(expression, (count, example))| NgramEntry {
            expression,
            count,
            example,
            flagged: count as f64 >= cutoff,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.expression.cmp(&b.expression)));
    NgramReport {
        entries,
        responses: corpus.len(),
    }
}

/// Remove every response sentence whose middle expression is blocked.
/// Records left with an empty response are dropped; review text and
/// surviving sentences are untouched.
pub fn filter_ads(corpus: &[ReviewRecord], blocklist: &HashSet<Expression>, n: usize) -> Vec<ReviewRecord> {
    if blocklist.is_empty() {
        return corpus.to_vec();
    }
    corpus
        .iter()
        .filter_map(|record| {
            let text = &record.response_text;
            let mut kept = String::with_capacity(text.len());
            let mut removed = false;
            for sentence in split_sentences(text) {
                let blocked = sentence_expression(sentence, n).is_some_and(|e| blocklist.contains(&e));
                if blocked {
                    removed = true;
                } else {
                    kept.push_str(sentence);
                }
            }
            if !removed {
                return Some(record.clone());
            }
            let kept = kept.trim_end();
            if kept.is_empty() {
                return None;
            }
            Some(ReviewRecord {
                response_text: kept.to_owned(),
                ..record.clone()
            })
        })
        .collect()
}

/// One expression per line, tokens separated by spaces. Every expression
/// must have exactly `n` tokens.
pub fn read_blocklist<R: BufRead>(reader: R, n: usize) -> Result<HashSet<Expression>> {
    let mut out = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<blocklist>", e))?;
        let toks: Expression = line.split_whitespace().map(str::to_owned).collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != n {
            return Err(Error::Parse {
                path: "<blocklist>".into(),
                line: i + 1,
                message: format!("expression has {} tokens, expected {n}", toks.len()),
            });
        }
        out.insert(toks);
    }
    Ok(out)
}
