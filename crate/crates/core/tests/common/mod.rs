//! Reference implementations used as oracles. They share no code with the
//! library: everything is recomputed from the definitions with plain loops.

#![allow(dead_code)]

use std::path::PathBuf;

use trrgen::model::{ModelConfig, Transformer};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Brute-force BLEU counts: for each order, every candidate position is
/// compared against every other candidate position and every reference
/// position by slice equality.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleBleu {
    pub matches: [u64; 4],
    pub totals: [u64; 4],
    pub c: u64,
    pub r: u64,
    pub score: f64,
}

pub fn oracle_bleu(candidates: &[Vec<u32>], references: &[Vec<u32>]) -> OracleBleu {
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    let (mut c, mut r) = (0u64, 0u64);
    for (cand, refr) in candidates.iter().zip(references) {
        c += cand.len() as u64;
        r += refr.len() as u64;
        for n in 1..=4 {
            if cand.len() < n {
                continue;
            }
            let cpos = cand.len() - n + 1;
            totals[n - 1] += cpos as u64;
            for i in 0..cpos {
                let g = &cand[i..i + n];
                // Count each distinct n-gram once, at its first occurrence.
                if (0..i).any(|j| &cand[j..j + n] == g) {
                    continue;
                }
                let in_cand = (0..cpos).filter(|&j| &cand[j..j + n] == g).count() as u64;
                let in_ref = if refr.len() >= n {
                    (0..refr.len() - n + 1).filter(|&j| &refr[j..j + n] == g).count() as u64
                } else {
                    0
                };
                matches[n - 1] += in_cand.min(in_ref);
            }
        }
    }
    let p: Vec<f64> = (0..4)
        .map(|k| if totals[k] == 0 { 0.0 } else { matches[k] as f64 / totals[k] as f64 })
        .collect();
    let bp = if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let score = if p.iter().any(|&x| x == 0.0) {
        0.0
    } else {
        100.0 * bp * (p.iter().map(|x| 0.25 * x.ln()).sum::<f64>()).exp()
    };
    OracleBleu {
        matches,
        totals,
        c,
        r,
        score,
    }
}

/// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
pub fn oracle_positional(pos: usize, dim: usize, d_model: usize) -> f64 {
    let i = (dim / 2) as f64;
    let angle = pos as f64 / 10000f64.powf(2.0 * i / d_model as f64);
    if dim % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

pub fn tiny_model(vocab: usize, d_model: usize, n_heads: usize, d_ff: usize, seed: u64) -> Transformer {
    let config = ModelConfig {
        d_model,
        n_heads,
        d_ff,
        n_layers: 1,
        dropout: 0.0,
        max_src_len: 16,
        max_tgt_len: 12,
        seed,
        ..ModelConfig::new(vocab)
    };
    Transformer::new(config).expect("valid tiny config")
}
