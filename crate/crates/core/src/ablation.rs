//! Train-and-evaluate one model per fusion variant on a shared split and
//! seed, so score differences come from the variant alone.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::corpus::{encode_record, EncodedRecord, PreprocessConfig, ReviewRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::{config_digest, evaluate_model, EvalReport};
use crate::generation::DecodeConfig;
use crate::model::{FusionVariant, ModelConfig, Transformer};
use crate::training::{train, EpochLog, TrainConfig, TrainOutcome};

/// Everything that stays fixed across variants. `model.fusion_variant` is
/// overwritten per run and `model.vocab_size` is taken from the vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSetup {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub preprocess: PreprocessConfig,
}

/// Normalized train/valid/test records plus the shared vocabulary.
pub struct AblationData<'a> {
    pub train: &'a [ReviewRecord],
    pub valid: &'a [ReviewRecord],
    pub test: &'a [ReviewRecord],
    pub vocab: &'a Vocabulary,
}

#[derive(Clone, Debug)]
pub struct AblationRun {
    pub report: EvalReport,
    pub outcome: TrainOutcome,
    pub model: Transformer,
}

pub fn encode_all(records: &[ReviewRecord], vocab: &Vocabulary, config: &PreprocessConfig) -> Result<Vec<EncodedRecord>> {
    records.iter().map(|r| encode_record(r, vocab, config)).collect()
}

/// Train and evaluate a single variant.
pub fn run_variant(
    data: &AblationData<'_>,
    setup: &AblationSetup,
    variant: FusionVariant,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<AblationRun> {
    if data.test.is_empty() {
        return Err(Error::Empty("test split"));
    }
    let model_config = ModelConfig {
        fusion_variant: variant,
        vocab_size: data.vocab.len(),
        ..setup.model.clone()
    };
    model_config.validate()?;
    let train_set = encode_all(data.train, data.vocab, &setup.preprocess)?;
    let valid_set = encode_all(data.valid, data.vocab, &setup.preprocess)?;
    let mut model = Transformer::new(model_config)?;
    let outcome = train(&mut model, &train_set, &valid_set, &setup.train, &mut on_epoch)?;
    let eval = evaluate_model(&model, data.vocab, data.test, &setup.decode, &setup.preprocess)?;
    let digest = config_digest(&AblationSetup {
        model: model.config.clone(),
        ..setup.clone()
    })?;
    Ok(AblationRun {
        report: EvalReport::new(variant.as_str(), data.test.len(), eval.bleu, digest),
        outcome,
        model,
    })
}

/// One run per variant, in the order given.
pub fn run_ablation(
    data: &AblationData<'_>,
    setup: &AblationSetup,
    variants: &[FusionVariant],
    mut on_epoch: impl FnMut(FusionVariant, &EpochLog) -> ControlFlow<()>,
) -> Result<Vec<AblationRun>> {
    if variants.is_empty() {
        return Err(Error::Empty("variant list"));
    }
    variants
        .iter()
        .map(|&v| run_variant(data, setup, v, |e| on_epoch(v, e)))
        .collect()
}
