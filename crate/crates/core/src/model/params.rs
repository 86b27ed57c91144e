//! The learnable weights, stored in a tree that is generic over its leaf
//! type. `Parameters<Tensor>` holds values, `Parameters<Var>` the same
//! weights bound to a tape, and `Parameters<[usize; 2]>` the shape layout
//! implied by a [`ModelConfig`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Per-head projections `W_i^Q, W_i^K, W_i^V` (`d_model × d_k` each) and
/// the combining matrix `W^O` (`d_model × d_model`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    pub w_q: Vec<T>,
    pub w_k: Vec<T>,
    pub w_v: Vec<T>,
    pub w_o: T,
}

/// `max(0, x·W₁ + b₁)·W₂ + b₂`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardParams<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams<T> {
    pub gamma: T,
    pub beta: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayerParams<T> {
    pub self_attn: AttentionParams<T>,
    pub norm1: NormParams<T>,
    pub ffn: FeedForwardParams<T>,
    pub norm2: NormParams<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayerParams<T> {
    pub self_attn: AttentionParams<T>,
    pub norm1: NormParams<T>,
    pub cross_attn: AttentionParams<T>,
    pub norm2: NormParams<T>,
    pub ffn: FeedForwardParams<T>,
    pub norm3: NormParams<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters<T = Tensor> {
    /// Shared token table `E` (`V × d_model`). Review words, the rating
    /// escape tokens and the category tokens all read their vectors here.
    pub embedding: T,
    pub encoder: Vec<EncoderLayerParams<T>>,
    pub decoder: Vec<DecoderLayerParams<T>>,
    /// `d_model × V`; absent when the output projection is tied to `E`.
    pub output_w: Option<T>,
    /// `1 × V`
    pub output_b: T,
}

type Shape = [usize; 2];

impl Parameters<Shape> {
    /// Shape of every weight for `config`.
    pub fn layout(config: &ModelConfig) -> Self {
        let (d, dk, ff, v) = (config.d_model, config.d_k(), config.d_ff, config.vocab_size);
        let attn = || AttentionParams {
            w_q: vec![[d, dk]; config.n_heads],
            w_k: vec![[d, dk]; config.n_heads],
            w_v: vec![[d, dk]; config.n_heads],
            w_o: [d, d],
        };
        let norm = || NormParams {
            gamma: [1, d],
            beta: [1, d],
        };
        let ffn = || FeedForwardParams {
            w1: [d, ff],
            b1: [1, ff],
            w2: [ff, d],
            b2: [1, d],
        };
        Parameters {
            embedding: [v, d],
            encoder: (0..config.n_layers)
                .map(|_| EncoderLayerParams {
                    self_attn: attn(),
                    norm1: norm(),
                    ffn: ffn(),
                    norm2: norm(),
                })
                .collect(),
            decoder: (0..config.n_layers)
                .map(|_| DecoderLayerParams {
                    self_attn: attn(),
                    norm1: norm(),
                    cross_attn: attn(),
                    norm2: norm(),
                    ffn: ffn(),
                    norm3: norm(),
                })
                .collect(),
            output_w: (!config.tie_output).then_some([d, v]),
            output_b: [1, v],
        }
    }
}

impl<T> AttentionParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a T) -> U) -> AttentionParams<U> {
        let heads = |ws: &'a [T], tag: &str, f: &mut dyn FnMut(&str, &'a T) -> U| {
            ws.iter()
                .enumerate()
                .map(|(h, w)| f(&format!("{prefix}.{tag}.{h}"), w))
                .collect()
        };
        AttentionParams {
            w_q: heads(&self.w_q, "w_q", f),
            w_k: heads(&self.w_k, "w_k", f),
            w_v: heads(&self.w_v, "w_v", f),
            w_o: f(&format!("{prefix}.w_o"), &self.w_o),
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.extend(self.w_q.iter_mut());
        out.extend(self.w_k.iter_mut());
        out.extend(self.w_v.iter_mut());
        out.push(&mut self.w_o);
    }
}

impl<T> NormParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a T) -> U) -> NormParams<U> {
        NormParams {
            gamma: f(&format!("{prefix}.gamma"), &self.gamma),
            beta: f(&format!("{prefix}.beta"), &self.beta),
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

impl<T> FeedForwardParams<T> {
    fn map<'a, U>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &'a T) -> U) -> FeedForwardParams<U> {
        FeedForwardParams {
            w1: f(&format!("{prefix}.w1"), &self.w1),
            b1: f(&format!("{prefix}.b1"), &self.b1),
            w2: f(&format!("{prefix}.w2"), &self.w2),
            b2: f(&format!("{prefix}.b2"), &self.b2),
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.push(&mut self.w1);
        out.push(&mut self.b1);
        out.push(&mut self.w2);
        out.push(&mut self.b2);
    }
}

impl<T> Parameters<T> {
    /// Structure-preserving map. Leaves are visited in a fixed order and
    /// named by their path, e.g. `decoder.0.cross_attn.w_v.3`.
    pub fn map<'a, U>(&'a self, f: &mut dyn FnMut(&str, &'a T) -> U) -> Parameters<U> {
        let embedding = f("embedding", &self.embedding);
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let p = format!("encoder.{i}");
                EncoderLayerParams {
                    self_attn: l.self_attn.map(&format!("{p}.self_attn"), f),
                    norm1: l.norm1.map(&format!("{p}.norm1"), f),
                    ffn: l.ffn.map(&format!("{p}.ffn"), f),
                    norm2: l.norm2.map(&format!("{p}.norm2"), f),
                }
            })
            .collect();
        let decoder = self
            .decoder
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let p = format!("decoder.{i}");
                DecoderLayerParams {
                    self_attn: l.self_attn.map(&format!("{p}.self_attn"), f),
                    norm1: l.norm1.map(&format!("{p}.norm1"), f),
                    cross_attn: l.cross_attn.map(&format!("{p}.cross_attn"), f),
                    norm2: l.norm2.map(&format!("{p}.norm2"), f),
                    ffn: l.ffn.map(&format!("{p}.ffn"), f),
                    norm3: l.norm3.map(&format!("{p}.norm3"), f),
                }
            })
            .collect();
        let output_w = self.output_w.as_ref().map(|w| f("output_w", w));
        let output_b = f("output_b", &self.output_b);
        Parameters {
            embedding,
            encoder,
            decoder,
            output_w,
            output_b,
        }
    }

    /// Leaves in [`map`](Self::map) order.
    pub fn leaves(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.map(&mut |_, t| out.push(t));
        out
    }

    pub fn named_leaves(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.map(&mut |name, t| out.push((name.to_owned(), t)));
        out
    }

    /// Mutable leaves in [`map`](Self::map) order.
    pub fn leaves_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.embedding];
        for l in &mut self.encoder {
            l.self_attn.collect_mut(&mut out);
            l.norm1.collect_mut(&mut out);
            l.ffn.collect_mut(&mut out);
            l.norm2.collect_mut(&mut out);
        }
        for l in &mut self.decoder {
            l.self_attn.collect_mut(&mut out);
            l.norm1.collect_mut(&mut out);
            l.cross_attn.collect_mut(&mut out);
            l.norm2.collect_mut(&mut out);
            l.ffn.collect_mut(&mut out);
            l.norm3.collect_mut(&mut out);
        }
        if let Some(w) = &mut self.output_w {
            out.push(w);
        }
        out.push(&mut self.output_b);
        out
    }

    pub fn count(&self) -> usize {
        self.leaves().len()
    }

    /// Refill this structure with `values` taken in leaf order.
    pub fn rebuild<U: Clone>(&self, values: &[U]) -> Result<Parameters<U>> {
        if values.len() != self.count() {
            return Err(Error::shape(
                "parameters",
                format!("{} values for {} leaves", values.len(), self.count()),
            ));
        }
        let mut it = values.iter();
        Ok(self.map(&mut |_, _| it.next().expect("length checked").clone()))
    }
}

impl Parameters<Tensor> {
    /// Uniform Glorot initialization: every matrix entry is drawn from
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`. Layer-norm gains
    /// are one, all biases and betas zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Parameters::layout(config).map(&mut |name, &[rows, cols]| {
            if name.ends_with(".gamma") {
                Tensor::ones(rows, cols)
            } else if rows == 1 {
                Tensor::zeros(rows, cols)
            } else {
                let bound = glorot_bound(rows, cols);
                let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
                Tensor::new(rows, cols, data).expect("layout shapes are valid")
            }
        }))
    }

    /// Put every leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Parameters<Var> {
        self.map(&mut |_, t| tape.leaf(t.clone()))
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let layout = Parameters::layout(config);
        let expected = layout.named_leaves();
        let actual = self.named_leaves();
        if expected.len() != actual.len() {
            return Err(Error::shape(
                "parameters",
                format!("{} tensors, config implies {}", actual.len(), expected.len()),
            ));
        }
        for ((name, shape), (_, t)) in expected.iter().zip(&actual) {
            if t.shape() != **shape {
                return Err(Error::shape(
                    "parameters",
                    format!("{name} is {:?}, config implies {:?}", t.shape(), shape),
                ));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.leaves().iter().all(|t| t.is_finite())
    }

    pub fn scalar_count(&self) -> usize {
        self.leaves().iter().map(|t| t.len()).sum()
    }

    /// Zero-filled tensors with the same structure.
    pub fn zeros_like(&self) -> Self {
        self.map(&mut |_, t| Tensor::zeros(t.rows(), t.cols()))
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 12,
            ..ModelConfig::new(30)
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Parameters::init(&tiny(), 5).unwrap();
        let b = Parameters::init(&tiny(), 5).unwrap();
        assert_eq!(a, b);
        let c = Parameters::init(&tiny(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn embedding_rows_respect_bound() {
        let config = tiny();
        let p = Parameters::init(&config, 1).unwrap();
        let bound = glorot_bound(config.vocab_size, config.d_model);
        for r in 0..p.embedding.rows() {
            let row = p.embedding.row(r);
            assert!(row.iter().all(|v| v.abs() <= bound));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= bound * (config.d_model as f64).sqrt());
        }
    }

    #[test]
    fn norms_and_biases_start_neutral() {
        let p = Parameters::init(&tiny(), 1).unwrap();
        for (name, t) in p.named_leaves() {
            if name.ends_with(".gamma") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            } else if name.ends_with(".beta") || name.contains(".b") || name == "output_b" {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn traversal_orders_agree() {
        let mut p = Parameters::init(&tiny(), 2).unwrap();
        let by_ref: Vec<Tensor> = p.leaves().into_iter().cloned().collect();
        let by_mut: Vec<Tensor> = p.leaves_mut().into_iter().map(|t| t.clone()).collect();
        assert_eq!(by_ref, by_mut);
        let rebuilt = p.rebuild(&by_ref).unwrap();
        assert_eq!(rebuilt, p);
        // 1 embedding + per layer: enc 3*2+1 + 2 + 4 + 2, dec 2*(3*2+1) + 2*3 + 4, + output w, b.
        assert_eq!(p.count(), 1 + 2 * (7 + 2 + 4 + 2) + 2 * (14 + 6 + 4) + 2);
    }

    #[test]
    fn tied_output_has_no_projection() {
        let config = ModelConfig {
            tie_output: true,
            ..tiny()
        };
        let p = Parameters::init(&config, 0).unwrap();
        assert!(p.output_w.is_none());
        assert!(p.check_shapes(&config).is_ok());
        assert!(p.check_shapes(&tiny()).is_err());
    }

    #[test]
    fn names_are_unique() {
        let p = Parameters::layout(&tiny());
        let names: Vec<String> = p.named_leaves().into_iter().map(|(n, _)| n).collect();
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert!(names.contains(&"decoder.1.cross_attn.w_v.1".to_owned()));
    }
}
