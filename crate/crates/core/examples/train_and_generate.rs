//! Memorize a small review/response corpus and read the replies back with
//! greedy decoding.
//!
//!     cargo run --release --example train_and_generate -- [corpus.jsonl]

use std::ops::ControlFlow;

use trrgen::ablation::encode_all;
use trrgen::corpus::{load_corpus, normalize_record, CorpusFormat, PreprocessConfig, Vocabulary};
use trrgen::evaluation::evaluate_model;
use trrgen::generation::DecodeConfig;
use trrgen::model::{ModelConfig, Transformer};
use trrgen::numerics::AdamConfig;
use trrgen::training::{train, TrainConfig};

fn main() -> trrgen::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/overfit32.jsonl").into());
    let preprocess = PreprocessConfig::default();
    let records: Vec<_> = load_corpus(&path, CorpusFormat::from_path(path.as_ref()))?
        .iter()
        .map(|r| normalize_record(r, &preprocess))
        .collect();
    let vocab = Vocabulary::build(&records, 1);
    let data = encode_all(&records, &vocab, &preprocess)?;

    let mut config = ModelConfig::new(vocab.len());
    config.d_model = 64;
    config.n_heads = 4;
    config.d_ff = 128;
    config.dropout = 0.0;
    config.max_src_len = 32;
    config.max_tgt_len = 32;
    config.seed = 1;
    let mut model = Transformer::new(config)?;
    let train_config = TrainConfig {
        epochs: 500,
        batch_size: 32,
        adam: AdamConfig {
            learning_rate: 3e-3,
            ..AdamConfig::default()
        },
        seed: 1,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let outcome = train(&mut model, &data, &[], &train_config, |e| {
        if e.epoch % 25 == 0 {
            println!("epoch {:>3}  loss {:.5}", e.epoch, e.train_loss);
        }
        if e.train_loss < 2e-3 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!("stopped after {} epochs ({:.1}s)", outcome.epochs_run, start.elapsed().as_secs_f64());

    let eval = evaluate_model(&model, &vocab, &records, &DecodeConfig::greedy(), &preprocess)?;
    for (r, c) in records.iter().zip(&eval.candidates).take(4) {
        println!("review:   {}\nresponse: {}\n", r.review_text, c.join(" "));
    }
    println!("training-set BLEU-4 {:.2}", eval.bleu.bleu);
    Ok(())
}
