//! Synthetic ablation: responses are fixed by the app category (or the
//! rating) while the review text is noise. Only variants that feed the
//! relevant feature to the encoder can score well.
//!
//!     cargo run --release --example fusion_ablation -- [category|rating]

use std::ops::ControlFlow;

use trrgen::ablation::{run_ablation, AblationData, AblationSetup};
use trrgen::corpus::synthetic::{category_corpus, rating_corpus};
use trrgen::corpus::{normalize_record, PreprocessConfig, Vocabulary};
use trrgen::evaluation::{corpus_bleu, format_table, random_selection_baseline, reference_tokens, EvalReport};
use trrgen::generation::DecodeConfig;
use trrgen::model::{FusionVariant, ModelConfig};
use trrgen::numerics::AdamConfig;
use trrgen::training::TrainConfig;

fn main() -> trrgen::Result<()> {
    let kind = std::env::args().nth(1).unwrap_or_else(|| "category".into());
    let epochs: usize = std::env::args().nth(2).map_or(12, |s| s.parse().expect("epochs"));
    let d_model: usize = std::env::args().nth(3).map_or(32, |s| s.parse().expect("d_model"));
    let corpus = match kind.as_str() {
        "rating" => rating_corpus(500, 11),
        _ => category_corpus(500, 11),
    };
    let preprocess = PreprocessConfig::default();
    let corpus: Vec<_> = corpus.iter().map(|r| normalize_record(r, &preprocess)).collect();
    let (train, test) = corpus.split_at(400);
    let vocab = Vocabulary::build(train, 1);

    let mut model = ModelConfig::new(vocab.len());
    model.d_model = d_model;
    model.n_heads = 4;
    model.d_ff = 2 * d_model;
    model.max_src_len = 16;
    model.max_tgt_len = 24;
    model.seed = 5;
    let setup = AblationSetup {
        model,
        train: TrainConfig {
            epochs,
            batch_size: 16,
            patience: epochs,
            adam: AdamConfig {
                learning_rate: 2e-3,
                ..AdamConfig::default()
            },
            seed: 5,
            ..TrainConfig::default()
        },
        decode: DecodeConfig::greedy(),
        preprocess,
    };
    let data = AblationData {
        train,
        valid: &[],
        test,
        vocab: &vocab,
    };
    let variants = [
        FusionVariant::Vanilla,
        FusionVariant::RatingOnly,
        FusionVariant::CategoryOnly,
        FusionVariant::TrrgenConcat,
        FusionVariant::TrrgenSum,
        FusionVariant::TrrgenOrder,
    ];
    let start = std::time::Instant::now();
    let runs = run_ablation(&data, &setup, &variants, |v, e| {
        eprintln!("{v:>14} epoch {:>3} loss {:.4}", e.epoch, e.train_loss);
        ControlFlow::Continue(())
    })?;
    let mut reports: Vec<EvalReport> = runs.into_iter().map(|r| r.report).collect();

    let pool: Vec<Vec<String>> = train.iter().map(reference_tokens).collect();
    let refs: Vec<Vec<String>> = test.iter().map(reference_tokens).collect();
    let baseline = random_selection_baseline(&pool, refs.len(), 5)?;
    reports.push(EvalReport::new("random_selection", refs.len(), corpus_bleu(&baseline, &refs)?, "-"));
    print!("{}", format_table(&reports));
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
