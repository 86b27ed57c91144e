//! Flat run configuration: every model, preprocessing, decoding and
//! optimizer knob plus data paths and the training schedule.
//!
//! The file form is TOML with one key per field. Any key can be overridden
//! with a same-named value (`--learning_rate 3e-3`); `TRRGEN_SEED` sits
//! between the file and explicit overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{default_rules, PlaceholderRule, PreprocessConfig, DEFAULT_MIN_FREQ};
use crate::error::{Error, Result};
use crate::generation::{DecodeConfig, Strategy};
use crate::model::{FusionVariant, ModelConfig};
use crate::numerics::AdamConfig;
use crate::training::TrainConfig;

pub const SEED_ENV: &str = "TRRGEN_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // data
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    /// Train/valid/test fractions used when only `train_path` is given.
    pub split_ratios: [f64; 3],
    pub min_freq: usize,

    // preprocessing
    pub lowercase: bool,
    pub placeholder_rules: Vec<PlaceholderRule>,
    pub ad_ngram_n: usize,
    pub ad_flag_threshold: f64,
    /// Drop flagged template sentences from responses before training.
    pub filter_ads: bool,
    pub max_review_tokens: usize,
    pub max_response_tokens: usize,

    // model
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub fusion_variant: FusionVariant,
    pub dropout: f64,
    pub tie_output: bool,
    pub layer_norm_eps: f64,

    // optimizer and schedule
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub valid_every: usize,
    pub patience: usize,
    pub seed: u64,

    // decoding
    pub strategy: Strategy,
    pub beam_width: usize,
    pub max_decode_len: Option<usize>,
    pub length_penalty: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::new(0);
        let pre = PreprocessConfig::default();
        let adam = AdamConfig::default();
        let train = TrainConfig::default();
        let decode = DecodeConfig::default();
        Self {
            train_path: None,
            valid_path: None,
            test_path: None,
            vocab_path: None,
            split_ratios: [0.8, 0.1, 0.1],
            min_freq: DEFAULT_MIN_FREQ,
            lowercase: pre.lowercase,
            placeholder_rules: default_rules(),
            ad_ngram_n: pre.ad_ngram_n,
            ad_flag_threshold: pre.ad_flag_threshold,
            filter_ads: false,
            max_review_tokens: pre.max_review_tokens,
            max_response_tokens: pre.max_response_tokens,
            d_model: model.d_model,
            n_heads: model.n_heads,
            n_layers: model.n_layers,
            d_ff: model.d_ff,
            max_src_len: model.max_src_len,
            max_tgt_len: model.max_tgt_len,
            fusion_variant: model.fusion_variant,
            dropout: model.dropout,
            tie_output: model.tie_output,
            layer_norm_eps: model.layer_norm_eps,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            epochs: train.epochs,
            batch_size: train.batch_size,
            valid_every: train.valid_every,
            patience: train.patience,
            seed: train.seed,
            strategy: decode.strategy,
            beam_width: decode.beam_width,
            max_decode_len: decode.max_len,
            length_penalty: decode.length_penalty,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Set one field from its textual form. The value is read as a TOML
    /// literal when possible (`3e-3`, `true`, `[0.8, 0.1, 0.1]`) and as a
    /// bare string otherwise (`trrgen_sum`, `data/train.jsonl`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_owned()));
        if !is_known_key(key) {
            return Err(Error::Config(format!("unknown key {key:?}")));
        }
        let parsed = match (key, parsed) {
            // Options serialize as absent keys, so they have no type to
            // coerce against; paths are always strings.
            (k, v) if k.ends_with("_path") => toml::Value::String(match v {
                toml::Value::String(s) => s,
                other => other.to_string(),
            }),
            (_, v) => v,
        };
        table.insert(key.to_owned(), parsed);
        *self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("--{key} {value}: {}", e.message())))?;
        Ok(())
    }

    /// File < `TRRGEN_SEED` < explicit overrides.
    pub fn resolve(base: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut config = match base {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = env_seed {
            config.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
        }
        for (k, v) in overrides {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess_config().validate()?;
        self.model_config(4).validate()?;
        self.train_config().validate()?;
        self.decode_config().validate()?;
        if self.split_ratios.iter().any(|r| !(0.0..=1.0).contains(r))
            || (self.split_ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!("split_ratios {:?} must be fractions summing to 1", self.split_ratios)));
        }
        if self.max_review_tokens > self.max_src_len {
            return Err(Error::Config(format!(
                "max_review_tokens {} exceeds max_src_len {}",
                self.max_review_tokens, self.max_src_len
            )));
        }
        if self.max_response_tokens + 1 > self.max_tgt_len {
            return Err(Error::Config(format!(
                "max_response_tokens {} needs max_tgt_len of at least {}",
                self.max_response_tokens,
                self.max_response_tokens + 1
            )));
        }
        Ok(())
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            placeholder_rules: self.placeholder_rules.clone(),
            lowercase: self.lowercase,
            ad_ngram_n: self.ad_ngram_n,
            ad_flag_threshold: self.ad_flag_threshold,
            max_review_tokens: self.max_review_tokens,
            max_response_tokens: self.max_response_tokens,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            d_ff: self.d_ff,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            fusion_variant: self.fusion_variant,
            dropout: self.dropout,
            vocab_size,
            seed: self.seed,
            tie_output: self.tie_output,
            layer_norm_eps: self.layer_norm_eps,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            valid_every: self.valid_every,
            patience: self.patience,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            seed: self.seed,
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            strategy: self.strategy,
            beam_width: self.beam_width,
            max_len: self.max_decode_len,
            length_penalty: self.length_penalty,
        }
    }
}

fn is_known_key(key: &str) -> bool {
    let all = serde_json::to_value(RunConfig::default()).expect("serializable");
    all.as_object().is_some_and(|o| o.contains_key(key))
}
