//! Corpus-level BLEU-4 on hand-made pairs, contrasted with the average of
//! smoothed sentence scores.
//!
//!     cargo run --example bleu_evaluation

use trrgen::corpus::tokenize;
use trrgen::evaluation::{corpus_bleu, corpus_stats, sentence_bleu};

const PAIRS: [(&str, &str); 4] = [
    ("thanks for the feedback ! we will fix it soon .", "thanks for the feedback ! we will fix this soon ."),
    ("sorry about the crash , please update .", "sorry about the crash . please update to the latest version ."),
    ("glad you like it !", "we are glad you like it !"),
    ("please contact <email> .", "please contact us at <email> ."),
];

fn main() -> trrgen::Result<()> {
    let candidates: Vec<Vec<String>> = PAIRS.iter().map(|(c, _)| tokenize(c)).collect();
    let references: Vec<Vec<String>> = PAIRS.iter().map(|(_, r)| tokenize(r)).collect();

    let stats = corpus_stats(&candidates, &references)?;
    let report = corpus_bleu(&candidates, &references)?;
    for n in 0..4 {
        println!("p{} = {:>2}/{:<2} = {:.4}", n + 1, stats.matches[n], stats.totals[n], report.precisions[n]);
    }
    println!("c = {}, r = {}, BP = {:.4}", report.candidate_len, report.reference_len, report.brevity_penalty);
    println!("corpus BLEU-4 = {:.2}", report.bleu);

    let mean: f64 = candidates
        .iter()
        .zip(&references)
        .map(|(c, r)| sentence_bleu(c, r, true))
        .sum::<f64>()
        / PAIRS.len() as f64;
    println!("mean smoothed sentence BLEU = {mean:.2} (diagnostic only)");
    Ok(())
}
