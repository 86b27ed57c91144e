//! Greedy versus beam decoding on a briefly trained model. Width 1 matches
//! greedy exactly; wider beams usually, but not always, find a higher
//! log-probability, since pruning can discard the greedy path.
//!
//!     cargo run --release --example beam_search

use std::ops::ControlFlow;

use trrgen::ablation::encode_all;
use trrgen::corpus::{load_corpus, normalize_record, CorpusFormat, PreprocessConfig, Vocabulary};
use trrgen::generation::{beam_search, greedy_search, postprocess, DecodeConfig};
use trrgen::model::{ModelConfig, Transformer};
use trrgen::numerics::AdamConfig;
use trrgen::training::{train, TrainConfig};

fn main() -> trrgen::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/overfit32.jsonl");
    let preprocess = PreprocessConfig::default();
    let records: Vec<_> = load_corpus(path, CorpusFormat::Jsonl)?
        .iter()
        .map(|r| normalize_record(r, &preprocess))
        .collect();
    let vocab = Vocabulary::build(&records, 1);
    let data = encode_all(&records, &vocab, &preprocess)?;
    let mut model = Transformer::new(ModelConfig {
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        dropout: 0.0,
        max_src_len: 32,
        max_tgt_len: 32,
        seed: 3,
        ..ModelConfig::new(vocab.len())
    })?;
    let config = TrainConfig {
        epochs: 20,
        batch_size: 8,
        adam: AdamConfig {
            learning_rate: 3e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    train(&mut model, &data, &[], &config, |_| ControlFlow::Continue(()))?;

    for ex in data.iter().take(3) {
        let greedy = greedy_search(&model, &ex.review, &DecodeConfig::greedy())?;
        println!("greedy     {:>8.3}  {}", greedy.score, postprocess(&greedy.tokens, &vocab)?);
        for width in [1, 2, 4, 8] {
            let beam = beam_search(&model, &ex.review, &DecodeConfig::beam(width))?;
            let same = if beam.tokens == greedy.tokens { "=" } else { " " };
            println!("beam {width:<2} {same} {:>8.3}  {}", beam.score, postprocess(&beam.tokens, &vocab)?);
        }
        println!();
    }
    Ok(())
}
