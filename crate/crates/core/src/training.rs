//! Mini-batch Adam with teacher forcing, validation-based model selection
//! and early stopping.

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedRecord;
use crate::error::{Error, Result};
use crate::model::{Mode, Parameters, Transformer};
use crate::numerics::{AdamConfig, AdamState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Validate every this many epochs.
    pub valid_every: usize,
    /// Stop after this many validations without improvement.
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            valid_every: 1,
            patience: 5,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.valid_every == 0 {
            return Err(Error::Config("batch_size and valid_every must be positive".into()));
        }
        if !(self.adam.learning_rate > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("adam needs learning_rate > 0 and betas in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One JSON-Lines log record. Epoch 0 holds the losses before training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub best: bool,
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_loss: Option<f64>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Token-weighted mean loss without dropout.
pub fn evaluate_loss(model: &Transformer, records: &[EncodedRecord], batch_size: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("loss evaluation set"));
    }
    let (mut sum, mut tokens) = (0.0, 0usize);
    for chunk in records.chunks(batch_size.max(1)) {
        let out = model.forward_training(chunk, Mode::Eval, false)?;
        sum += out.loss * out.tokens as f64;
        tokens += out.tokens;
    }
    Ok(sum / tokens as f64)
}

/// Train `model` in place. With a validation set, the parameters of the
/// best validation loss are restored at the end; without one, the final
/// parameters are kept. `on_epoch` sees every log record and may stop
/// training early by returning `Break`.
pub fn train(
    model: &mut Transformer,
    train_set: &[EncodedRecord],
    valid_set: &[EncodedRecord],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let has_valid = !valid_set.is_empty();
    let mut adam = AdamState::new(config.adam, &model.params.leaves());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let initial_valid = if has_valid {
        Some(evaluate_loss(model, valid_set, config.batch_size)?)
    } else {
        None
    };
    let first = EpochLog {
        epoch: 0,
        train_loss: evaluate_loss(model, train_set, config.batch_size)?,
        valid_loss: initial_valid,
        best: has_valid,
        steps: 0,
    };
    let mut outcome = TrainOutcome {
        log: vec![first.clone()],
        best_epoch: 0,
        best_valid_loss: initial_valid,
        epochs_run: 0,
        stopped_early: false,
    };
    let mut best_params: Option<Parameters> = has_valid.then(|| model.params.clone());
    let mut since_best = 0;
    if on_epoch(&first).is_break() {
        return Ok(outcome);
    }

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0xA076_1D64_78BD_642F));
        order.shuffle(&mut rng);
        let (mut sum, mut tokens) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<EncodedRecord> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let mode = Mode::Train {
                seed: config.seed,
                step: adam.step_count(),
            };
            let out = model.forward_training(&batch, mode, true)?;
            let grads = out.gradients.expect("gradients requested");
            let grad_leaves: Vec<_> = grads.leaves().into_iter().cloned().collect();
            adam.step(&mut model.params.leaves_mut(), &grad_leaves)?;
            if !model.params.is_finite() {
                return Err(Error::NonFinite(format!("parameters after step {} (epoch {epoch})", adam.step_count())));
            }
            sum += out.loss * out.tokens as f64;
            tokens += out.tokens;
        }
        outcome.epochs_run = epoch;

        let mut entry = EpochLog {
            epoch,
            train_loss: sum / tokens as f64,
            valid_loss: None,
            best: false,
            steps: adam.step_count(),
        };
        let mut patience_spent = false;
        if has_valid && epoch % config.valid_every == 0 {
            let v = evaluate_loss(model, valid_set, config.batch_size)?;
            entry.valid_loss = Some(v);
            if outcome.best_valid_loss.map_or(true, |b| v < b) {
                entry.best = true;
                outcome.best_valid_loss = Some(v);
                outcome.best_epoch = epoch;
                best_params = Some(model.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                patience_spent = since_best >= config.patience;
            }
        } else if !has_valid {
            outcome.best_epoch = epoch;
        }
        outcome.log.push(entry.clone());
        if on_epoch(&entry).is_break() {
            break;
        }
        if patience_spent {
            outcome.stopped_early = true;
            break;
        }
    }
    if let Some(best) = best_params {
        model.params = best;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EncodedReview;
    use crate::model::ModelConfig;

    fn tiny() -> (Transformer, Vec<EncodedRecord>) {
        let mut cfg = ModelConfig::new(20);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ff = 16;
        cfg.max_src_len = 8;
        cfg.max_tgt_len = 8;
        cfg.seed = 3;
        let data = (0..6)
            .map(|i| EncodedRecord {
                review: EncodedReview {
                    src: vec![13 + i % 3, 14],
                    rating: 4 + i % 5,
                    category: 9,
                },
                tgt: vec![2, 15 + i % 4, 16, 3],
            })
            .collect();
        (Transformer::new(cfg).unwrap(), data)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            batch_size: 4,
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_runs_are_deterministic() {
        let (mut a, data) = tiny();
        let mut b = a.clone();
        let ra = train(&mut a, &data, &[], &config(), |_| ControlFlow::Continue(())).unwrap();
        let rb = train(&mut b, &data, &[], &config(), |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert_eq!(ra.log.len(), 6);
        assert!(ra.log[5].train_loss < ra.log[0].train_loss);
        assert_eq!(ra.log[5].steps, 10);
    }

    #[test]
    fn best_validation_parameters_are_restored() {
        let (mut m, data) = tiny();
        let mut seen = Vec::new();
        let out = train(&mut m, &data[..4], &data[4..], &config(), |e| {
            seen.push(e.clone());
            ControlFlow::Continue(())
        })
        .unwrap();
        let best = out.best_valid_loss.unwrap();
        assert_eq!(seen, out.log);
        assert!((evaluate_loss(&m, &data[4..], 4).unwrap() - best).abs() < 1e-12);
    }

    #[test]
    fn callback_can_stop() {
        let (mut m, data) = tiny();
        let out = train(&mut m, &data, &[], &config(), |e| {
            if e.epoch == 2 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(out.epochs_run, 2);
    }

    #[test]
    fn patience_stops_training() {
        let (mut m, data) = tiny();
        let mut cfg = config();
        cfg.epochs = 200;
        cfg.patience = 1;
        cfg.adam.learning_rate = 0.5;
        let out = train(&mut m, &data[..4], &data[4..], &cfg, |_| ControlFlow::Continue(()));
        match out {
            Ok(o) => assert!(o.stopped_early && o.epochs_run < 200),
            Err(e) => assert!(matches!(e, Error::NonFinite(_))),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let (mut m, data) = tiny();
        let mut cfg = config();
        cfg.batch_size = 0;
        assert!(train(&mut m, &data, &[], &cfg, |_| ControlFlow::Continue(())).is_err());
        assert!(train(&mut m, &[], &[], &config(), |_| ControlFlow::Continue(())).is_err());
    }
}
