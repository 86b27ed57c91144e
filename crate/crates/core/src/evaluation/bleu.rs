//! Corpus-level BLEU with clipped n-gram precision and brevity penalty,
//! against a single reference per candidate.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Additive n-gram statistics. Merging is associative and commutative, so
/// pairs can be counted in any grouping.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    /// Clipped matches per order (index 0 = unigrams).
    pub matches: [u64; MAX_ORDER],
    /// Candidate n-grams per order.
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    pub fn from_pair<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> Self {
        let mut s = BleuStats {
            candidate_len: candidate.len() as u64,
            reference_len: reference.len() as u64,
            ..BleuStats::default()
        };
        for n in 1..=MAX_ORDER {
            if candidate.len() < n {
                continue;
            }
            let ref_counts = ngram_counts(reference, n);
            let cand_counts = ngram_counts(candidate, n);
            s.totals[n - 1] = (candidate.len() + 1 - n) as u64;
            s.matches[n - 1] = cand_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        s
    }

    pub fn merge(mut self, other: &BleuStats) -> Self {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
        self
    }

    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// Corpus-level clipped precisions `p_1..p_4`.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    /// BLEU-4 on a 0..100 scale.
    pub bleu: f64,
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuReport {
    pub fn from_stats(stats: &BleuStats) -> Self {
        let precisions = [1, 2, 3, 4].map(|n| stats.precision(n));
        let bp = brevity_penalty(stats.candidate_len, stats.reference_len);
        let bleu = if precisions.iter().any(|&p| p == 0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * bp * log_mean.exp()
        };
        Self {
            precisions,
            brevity_penalty: bp,
            bleu,
            candidate_len: stats.candidate_len,
            reference_len: stats.reference_len,
        }
    }
}

fn check_pairs<T>(candidates: &[T], references: &[T]) -> Result<()> {
    if candidates.len() != references.len() {
        return Err(Error::shape(
            "bleu",
            format!("{} candidates for {} references", candidates.len(), references.len()),
        ));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("BLEU needs at least one candidate/reference pair"));
    }
    Ok(())
}

pub fn corpus_stats<T: Eq + Hash + Sync>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuStats> {
    check_pairs(candidates, references)?;
    let per_pair: Vec<BleuStats> = candidates
        .par_iter()
        .zip(references)
        .map(|(c, r)| BleuStats::from_pair(c, r))
        .collect();
    Ok(per_pair.iter().fold(BleuStats::default(), BleuStats::merge))
}

/// Corpus-level clipped precision for order `n` (1..=4).
pub fn modified_precision<T: Eq + Hash + Sync>(candidates: &[Vec<T>], references: &[Vec<T>], n: usize) -> Result<f64> {
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::Config(format!("n-gram order {n} outside 1..=4")));
    }
    Ok(corpus_stats(candidates, references)?.precision(n))
}

/// 1 when the candidate corpus is at least as long as the reference
/// corpus, `exp(1 - r/c)` otherwise, and 0 for an empty candidate corpus.
pub fn brevity_penalty(candidate_len: u64, reference_len: u64) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len >= reference_len {
        1.0
    } else {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    }
}

/// Uniformly weighted BLEU-4, no smoothing.
pub fn corpus_bleu<T: Eq + Hash + Sync>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<BleuReport> {
    Ok(BleuReport::from_stats(&corpus_stats(candidates, references)?))
}

/// Single-pair BLEU-4 for diagnostics. With `smooth`, orders above one
/// use add-one counts so short partial matches do not score zero.
pub fn sentence_bleu<T: Eq + Hash>(candidate: &[T], reference: &[T], smooth: bool) -> f64 {
    let s = BleuStats::from_pair(candidate, reference);
    if !smooth {
        return BleuReport::from_stats(&s).bleu;
    }
    if s.candidate_len == 0 || s.matches[0] == 0 {
        return 0.0;
    }
    let log_mean = (1..=MAX_ORDER)
        .map(|n| {
            let (m, t) = (s.matches[n - 1] as f64, s.totals[n - 1] as f64);
            if n == 1 {
                (m / t).ln()
            } else {
                ((m + 1.0) / (t + 1.0)).ln()
            }
        })
        .sum::<f64>()
        / MAX_ORDER as f64;
    100.0 * brevity_penalty(s.candidate_len, s.reference_len) * log_mean.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn clipping_example() {
        let c = vec![toks("the the the the the the the")];
        let r = vec![toks("the cat is on the mat")];
        assert!((modified_precision(&c, &r, 1).unwrap() - 2.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn identical_corpora_score_100() {
        let c = vec![toks("thanks for the kind review"), toks("we fixed the crash in 2.1")];
        let report = corpus_bleu(&c, &c).unwrap();
        assert_eq!(report.brevity_penalty, 1.0);
        assert!((report.bleu - 100.0).abs() < 1e-12);
        for n in 1..=4 {
            assert_eq!(modified_precision(&c, &c, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn disjoint_corpora_score_zero() {
        let c = vec![toks("a b c d")];
        let r = vec![toks("e f g h")];
        assert_eq!(corpus_bleu(&c, &r).unwrap().bleu, 0.0);
    }

    #[test]
    fn short_candidates_contribute_nothing() {
        let s = BleuStats::from_pair(&toks("hi"), &toks("hi there"));
        assert_eq!(s.totals, [1, 0, 0, 0]);
        assert_eq!(s.matches, [1, 0, 0, 0]);
    }

    #[test]
    fn brevity_penalty_values() {
        assert_eq!(brevity_penalty(10, 8), 1.0);
        assert!((brevity_penalty(3, 4) - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
        assert!((brevity_penalty(3, 4) - 0.71653).abs() < 1e-5);
        assert_eq!(brevity_penalty(0, 5), 0.0);
    }

    #[test]
    fn errors() {
        let c = vec![toks("a")];
        assert!(corpus_bleu(&c, &[]).is_err());
        let empty: Vec<Vec<&str>> = Vec::new();
        assert!(corpus_bleu(&empty, &empty).is_err());
        assert!(modified_precision(&c, &c, 5).is_err());
    }

    #[test]
    fn smoothing_only_affects_diagnostics() {
        let c = toks("thanks a lot");
        let r = toks("thanks so much a lot");
        assert_eq!(sentence_bleu(&c, &r, false), 0.0);
        assert!(sentence_bleu(&c, &r, true) > 0.0);
    }
}
