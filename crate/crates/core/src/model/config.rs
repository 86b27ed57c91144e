use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the rating vector `r` and category vector `c` are combined with the
/// review token embeddings `w_i` and positional rows `p_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    /// `x_i = w_i + p_i`, `X = [x_1..x_n]`
    Vanilla,
    /// `x_i = w_i + r + p_i`, `X = [x_1..x_n]`
    RatingOnly,
    /// `x_i = w_i + p_i`, `X = [c, x_1..x_n]`
    CategoryOnly,
    /// `x_i = w_i + r + p_i`, `X = [c, x_1..x_n]`
    TrrgenConcat,
    /// `x_i = w_i + r + c + p_i`, `X = [x_1..x_n]`
    TrrgenSum,
    /// `x_i = w_i + p_i`, `X = [c, r, x_1..x_n]`
    TrrgenOrder,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 6] = [
        FusionVariant::Vanilla,
        FusionVariant::RatingOnly,
        FusionVariant::CategoryOnly,
        FusionVariant::TrrgenConcat,
        FusionVariant::TrrgenSum,
        FusionVariant::TrrgenOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionVariant::Vanilla => "vanilla",
            FusionVariant::RatingOnly => "rating_only",
            FusionVariant::CategoryOnly => "category_only",
            FusionVariant::TrrgenConcat => "trrgen_concat",
            FusionVariant::TrrgenSum => "trrgen_sum",
            FusionVariant::TrrgenOrder => "trrgen_order",
        }
    }

    pub fn uses_rating(self) -> bool {
        !matches!(self, FusionVariant::Vanilla | FusionVariant::CategoryOnly)
    }

    pub fn uses_category(self) -> bool {
        !matches!(self, FusionVariant::Vanilla | FusionVariant::RatingOnly)
    }

    /// Number of feature slots prepended before the review tokens.
    pub fn prefix_len(self) -> usize {
        match self {
            FusionVariant::CategoryOnly | FusionVariant::TrrgenConcat => 1,
            FusionVariant::TrrgenOrder => 2,
            _ => 0,
        }
    }

    /// Encoder input length for a review of `n` tokens.
    pub fn fused_len(self, n: usize) -> usize {
        n + self.prefix_len()
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    /// Longest review (in tokens) the encoder accepts, before fusion slots.
    pub max_src_len: usize,
    /// Longest decoder input (`<sos>` + response tokens).
    pub max_tgt_len: usize,
    pub fusion_variant: FusionVariant,
    pub dropout: f64,
    pub vocab_size: usize,
    pub seed: u64,
    /// Reuse the embedding table as the output projection.
    pub tie_output: bool,
    pub layer_norm_eps: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            d_model: 256,
            n_heads: 4,
            n_layers: 1,
            d_ff: 1024,
            max_src_len: 100,
            max_tgt_len: 121,
            fusion_variant: FusionVariant::TrrgenConcat,
            dropout: 0.1,
            vocab_size,
            seed: 0,
            tie_output: false,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("d_model, n_heads and d_ff must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_model % 2 != 0 {
            return fail(format!("d_model {} must be even for positional encoding", self.d_model));
        }
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.max_src_len < 2 || self.max_tgt_len < 2 {
            return fail("max_src_len and max_tgt_len must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if self.vocab_size < 4 {
            return fail(format!("vocab_size {} is below the 4 special tokens", self.vocab_size));
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in FusionVariant::ALL {
            assert_eq!(v.as_str().parse::<FusionVariant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!("concat".parse::<FusionVariant>().is_err());
    }

    #[test]
    fn fused_lengths() {
        let lens: Vec<usize> = FusionVariant::ALL.iter().map(|v| v.fused_len(3)).collect();
        assert_eq!(lens, [3, 3, 4, 4, 3, 5]);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::new(50);
        assert!(c.validate().is_ok());
        c.n_heads = 3;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.n_layers = 0;
        assert!(c.validate().is_err());
        c.n_layers = 1;
        c.max_tgt_len = 1;
        assert!(c.validate().is_err());
        c.max_tgt_len = 10;
        c.d_model = 6;
        c.n_heads = 3;
        assert!(c.validate().is_ok());
        c.d_model = 9;
        assert!(c.validate().is_err());
    }
}
