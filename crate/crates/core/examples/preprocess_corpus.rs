//! Normalize raw review/response pairs, find the repeated advertising
//! sentences hidden in developer replies, and filter them out.
//!
//! Flagging is only a shortlist: frequent replies like "thanks for your
//! review" are flagged too, so the blocklist is chosen by hand.
//!
//!     cargo run --example preprocess_corpus -- [corpus.jsonl] [blocked expression]

use std::collections::HashSet;

use trrgen::corpus::{
    ad_report, filter_ads, load_corpus, normalize_record, split_sentences, tokenize, CorpusFormat, PreprocessConfig,
    ReviewRecord,
};

fn sentences(records: &[ReviewRecord]) -> usize {
    records.iter().map(|r| split_sentences(&r.response_text).len()).sum()
}

fn main() -> trrgen::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ads_planted.jsonl").into());
    let config = PreprocessConfig::default();
    let raw = load_corpus(&path, CorpusFormat::from_path(path.as_ref()))?;
    let records: Vec<_> = raw.iter().map(|r| normalize_record(r, &config)).collect();

    println!("{} records; first pair after normalization:", records.len());
    println!("  raw      {:?}", raw[0].response_text);
    println!("  cleaned  {:?}", records[0].response_text);
    println!("  tokens   {:?}", tokenize(&records[0].response_text));

    let report = ad_report(&records, &config);
    let cutoff = config.ad_flag_threshold * records.len() as f64;
    println!("\nflagged expressions (count ≥ {cutoff}):");
    for e in report.flagged() {
        println!("  {:>4}  {}", e.count, e.expression.join(" "));
    }

    let blocked = std::env::args().nth(2).unwrap_or_else(|| "on twitter for daily tips".into());
    let blocklist: HashSet<_> = [tokenize(&blocked)].into_iter().collect();
    let filtered = filter_ads(&records, &blocklist, config.ad_ngram_n);
    println!(
        "\nblocking {blocked:?}: {} -> {} response sentences, {} -> {} records",
        sentences(&records),
        sentences(&filtered),
        records.len(),
        filtered.len()
    );
    Ok(())
}
