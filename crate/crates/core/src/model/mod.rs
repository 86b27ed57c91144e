//! The feature-fused encoder-decoder Transformer.

pub mod config;
pub mod layers;
pub mod params;
pub mod transformer;

pub use config::{FusionVariant, ModelConfig};
pub use layers::{positional_encoding, Attention, Dropout, Graph};
pub use params::{AttentionParams, DecoderLayerParams, EncoderLayerParams, FeedForwardParams, NormParams, Parameters};
pub use transformer::{batch_loss_on_tape, BatchOutput, EncoderOutput, Mode, PaddedBatch, Transformer};
