//! Finite-difference check of the full encoder-decoder loss, then the same
//! check with a deliberately broken backward rule to show it gets caught.
//!
//!     cargo run --release --example gradient_check

use trrgen::corpus::{encode_record, normalize_record, PreprocessConfig, ReviewRecord, Vocabulary};
use trrgen::model::{batch_loss_on_tape, FusionVariant, ModelConfig, Transformer};
use trrgen::numerics::{grad_check, BackwardFault, Tensor, DEFAULT_EPS};

fn main() -> trrgen::Result<()> {
    let preprocess = PreprocessConfig::default();
    let records: Vec<_> = [
        ReviewRecord::new("Tally", "FINANCE", 2, "Sync keeps failing.", "Sorry! Please update."),
        ReviewRecord::new("Tally", "FINANCE", 5, "Great budgets.", "Thanks a lot!"),
    ]
    .iter()
    .map(|r| normalize_record(r, &preprocess))
    .collect();
    let vocab = Vocabulary::build(&records, 1);
    let batch = records
        .iter()
        .map(|r| encode_record(r, &vocab, &preprocess))
        .collect::<trrgen::Result<Vec<_>>>()?;

    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        dropout: 0.0,
        max_src_len: 16,
        max_tgt_len: 16,
        fusion_variant: FusionVariant::TrrgenConcat,
        ..ModelConfig::new(vocab.len())
    };
    let model = Transformer::new(config.clone())?;
    let values: Vec<Tensor> = model.params.leaves().into_iter().cloned().collect();
    println!("{} parameter tensors, {} scalars", values.len(), model.params.scalar_count());

    for fault in [None, Some(BackwardFault::ReluPassThrough), Some(BackwardFault::SoftmaxDiagonalOnly)] {
        let report = grad_check(
            |tape, vars| {
                if let Some(f) = fault {
                    tape.inject_fault(f);
                }
                let p = model.params.rebuild(vars)?;
                batch_loss_on_tape(tape, &p, &config, &batch)
            },
            &values,
            DEFAULT_EPS,
        )?;
        println!(
            "{:<22} max rel error {:.2e}  (analytic {:+.4e}, numeric {:+.4e})",
            fault.map_or("correct".to_string(), |f| format!("{f:?}")),
            report.max_relative_error,
            report.analytic,
            report.numeric,
        );
    }
    Ok(())
}
