//! Save a model with its vocabulary and run configuration, load it back,
//! and confirm both the bytes and the decoded output are unchanged.
//!
//!     cargo run --example checkpoint_roundtrip

use trrgen::checkpoint::{Checkpoint, TrainingMeta};
use trrgen::config::RunConfig;
use trrgen::corpus::{encode_review, load_corpus, normalize_record, CorpusFormat, Vocabulary};
use trrgen::generation::{greedy_decode, DecodeConfig};
use trrgen::model::Transformer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/overfit32.jsonl");
    let run = RunConfig {
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        ..RunConfig::default()
    };
    run.validate()?;
    let preprocess = run.preprocess_config();
    let records: Vec<_> = load_corpus(path, CorpusFormat::Jsonl)?
        .iter()
        .map(|r| normalize_record(r, &preprocess))
        .collect();
    let vocab = Vocabulary::build(&records, 1);
    let model = Transformer::new(run.model_config(vocab.len()))?;
    let ckpt = Checkpoint::new(run, vocab, model, TrainingMeta::default())?;

    let file = std::env::temp_dir().join(format!("trrgen-roundtrip-{}.ckpt", std::process::id()));
    ckpt.save(&file)?;
    let loaded = Checkpoint::load(&file)?;
    let mut again = Vec::new();
    loaded.write_to(&mut again)?;
    let original = std::fs::read(&file)?;
    std::fs::remove_file(&file)?;
    println!("{} bytes, {} parameters", original.len(), loaded.model.params.scalar_count());
    println!("re-serialized identical: {}", original == again);

    let review = encode_review(&records[0], &loaded.vocab, &preprocess)?;
    let decode = DecodeConfig {
        max_len: Some(8),
        ..DecodeConfig::greedy()
    };
    let a = greedy_decode(&ckpt.model, &review, &decode)?;
    let b = greedy_decode(&loaded.model, &review, &decode)?;
    println!("decoded output identical: {}", a == b);
    Ok(())
}
