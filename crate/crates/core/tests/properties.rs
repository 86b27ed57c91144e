//! Property tests: per-primitive gradient checks on random shapes up to
//! 8×8, softmax / layer-norm invariants, normalization idempotence, and
//! BLEU symmetries.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracle_bleu;
use trrgen::corpus::{normalize_text, PreprocessConfig};
use trrgen::evaluation::{corpus_bleu, corpus_stats};
use trrgen::numerics::{grad_check, Axis, Mask, Tape, Tensor, Var, DEFAULT_EPS};

const TOL: f64 = 1e-5;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Tensor::new(rows, cols, d).unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=8, 1usize..=8)
}

/// Reduce `y` to a scalar through a fixed random weighting so every output
/// coordinate carries a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, y: Var, w: &Tensor) -> trrgen::Result<Var> {
    let w = tape.leaf(w.clone());
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

fn max_err<F>(f: F, params: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> trrgen::Result<Var>,
{
    grad_check(f, params, DEFAULT_EPS).unwrap().max_relative_error
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grad_matmul(((m, k), n) in (dims(), 1usize..=8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, w) = (random(&mut rng, m, k), random(&mut rng, k, n), random(&mut rng, m, n));
        let e = max_err(|t, v| { let y = t.matmul(v[0], v[1])?; weighted_sum(t, y, &w) }, &[a, b]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_matmul_transposed(((m, k), n) in (dims(), 1usize..=8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, w) = (random(&mut rng, m, k), random(&mut rng, n, k), random(&mut rng, m, n));
        let e = max_err(|t, v| { let y = t.matmul_transposed(v[0], v[1])?; weighted_sum(t, y, &w) }, &[a, b]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_add_and_row_broadcast((r, c) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, bias, w) = (random(&mut rng, r, c), random(&mut rng, r, c), random(&mut rng, 1, c), random(&mut rng, r, c));
        let e = max_err(|t, v| {
            let y = t.add(v[0], v[1])?;
            let y = t.add(y, v[2])?;
            weighted_sum(t, y, &w)
        }, &[a, b, bias]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_mul_scale_transpose((r, c) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, w) = (random(&mut rng, r, c), random(&mut rng, r, c), random(&mut rng, c, r));
        let e = max_err(|t, v| {
            let y = t.mul(v[0], v[1])?;
            let y = t.scale(y, -1.5);
            let y = t.transpose(y);
            weighted_sum(t, y, &w)
        }, &[a, b]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_relu_away_from_kink(x in tensor(4, 5).prop_filter("kink", |t| t.data().iter().all(|v| v.abs() > 1e-3)), seed in any::<u64>()) {
        let w = random(&mut ChaCha8Rng::seed_from_u64(seed), 4, 5);
        let e = max_err(|t, v| { let y = t.relu(v[0]); weighted_sum(t, y, &w) }, &[x]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_softmax_both_axes((r, c) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (random(&mut rng, r, c), random(&mut rng, r, c));
        for axis in [Axis::Cols, Axis::Rows] {
            let e = max_err(|t, v| { let y = t.softmax(v[0], axis); weighted_sum(t, y, &w) }, &[x.clone()]);
            prop_assert!(e < TOL, "{axis:?} {e}");
        }
    }

    #[test]
    fn grad_masked_softmax((r, c) in dims(), seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (random(&mut rng, r, c), random(&mut rng, r, c));
        let mut allowed: Vec<bool> = bits[..r * c].to_vec();
        for row in 0..r {
            allowed[row * c] = true;
        }
        let mask = Mask::new(r, c, allowed).unwrap();
        let e = max_err(|t, v| { let y = t.masked_softmax(v[0], &mask)?; weighted_sum(t, y, &w) }, &[x]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_layer_norm(r in 1usize..=8, c in 2usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, g, b, w) = (random(&mut rng, r, c), random(&mut rng, 1, c), random(&mut rng, 1, c), random(&mut rng, r, c));
        let e = max_err(|t, v| { let y = t.layer_norm(v[0], v[1], v[2], 1e-5)?; weighted_sum(t, y, &w) }, &[x, g, b]);
        prop_assert!(e < 1e-4, "{e}");
    }

    #[test]
    fn grad_embedding_and_concat(vocab in 2usize..=8, d in 1usize..=8, ids in prop::collection::vec(0usize..8, 1..6), seed in any::<u64>()) {
        let ids: Vec<usize> = ids.into_iter().map(|i| i % vocab).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random(&mut rng, vocab, d);
        let extra = random(&mut rng, 1, d);
        let side = random(&mut rng, ids.len() + 1, 2);
        let w = random(&mut rng, ids.len() + 1, d + 2);
        let e = max_err(|t, v| {
            let emb = t.embedding(v[0], &ids)?;
            let rows = t.concat_rows(&[v[1], emb])?;
            let y = t.concat_cols(&[rows, v[2]])?;
            weighted_sum(t, y, &w)
        }, &[table, extra, side]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_cross_entropy((r, c) in (1usize..=8, 2usize..=8), targets in prop::collection::vec(0usize..8, 8), seed in any::<u64>()) {
        let x = random(&mut ChaCha8Rng::seed_from_u64(seed), r, c);
        let mut targets: Vec<usize> = targets[..r].iter().map(|t| t % c).collect();
        // An id outside the class range marks the last row as ignored.
        let ignore = c;
        if r > 1 {
            targets[r - 1] = ignore;
        }
        let e = max_err(|t, v| t.cross_entropy(v[0], &targets, ignore), &[x]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn grad_dropout_with_fixed_mask((r, c) in dims(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, w) = (random(&mut rng, r, c), random(&mut rng, r, c));
        let e = max_err(|t, v| {
            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let y = t.dropout(v[0], 0.3, true, &mut mask_rng)?;
            weighted_sum(t, y, &w)
        }, &[x]);
        prop_assert!(e < TOL, "{e}");
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(x in tensor(5, 7), shift in -500.0f64..500.0) {
        let s = x.softmax(Axis::Cols);
        let shifted = x.map(|v| v + shift).softmax(Axis::Cols);
        for r in 0..5 {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        for (a, b) in s.data().iter().zip(shifted.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_standardizes(x in tensor(3, 16).prop_map(|t| t.scale(10.0))) {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let g = tape.leaf(Tensor::ones(1, 16));
        let b = tape.leaf(Tensor::zeros(1, 16));
        let y = tape.layer_norm(xv, g, b, 1e-5).unwrap();
        let y = tape.value(y);
        for r in 0..3 {
            let mean = y.row(r).iter().sum::<f64>() / 16.0;
            let var = y.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-3, "{var}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalize_is_idempotent(s in r"([A-Za-z0-9ÉßÜ_.,!?@<>:/\- \t]|https?://|www\.|\.com|@mail\.io|<url>|<email>){0,30}") {
        let config = PreprocessConfig::default();
        let once = normalize_text(&s, &config);
        prop_assert_eq!(normalize_text(&once, &config), once);
    }

    #[test]
    fn bleu_matches_oracle_and_symmetries(
        pairs in prop::collection::vec((prop::collection::vec(0u32..4, 0..10), prop::collection::vec(0u32..4, 0..10)), 1..6)
    ) {
        let (cands, refs): (Vec<Vec<u32>>, Vec<Vec<u32>>) = pairs.iter().cloned().unzip();
        let oracle = oracle_bleu(&cands, &refs);
        let stats = corpus_stats(&cands, &refs).unwrap();
        prop_assert_eq!(stats.matches, oracle.matches);
        prop_assert_eq!(stats.totals, oracle.totals);
        let report = corpus_bleu(&cands, &refs).unwrap();
        prop_assert!((report.bleu - oracle.score).abs() <= 1e-9);
        prop_assert!((0.0..=100.0).contains(&report.bleu));

        // Pair order does not matter.
        let (rc, rr): (Vec<_>, Vec<_>) = pairs.iter().rev().cloned().unzip();
        prop_assert_eq!(corpus_bleu(&rc, &rr).unwrap(), report.clone());

        // Duplicating every pair leaves precisions, BP and BLEU unchanged.
        let dc: Vec<_> = cands.iter().chain(&cands).cloned().collect();
        let dr: Vec<_> = refs.iter().chain(&refs).cloned().collect();
        let dup = corpus_bleu(&dc, &dr).unwrap();
        prop_assert_eq!(dup.precisions, report.precisions);
        prop_assert_eq!(dup.brevity_penalty, report.brevity_penalty);
        prop_assert!((dup.bleu - report.bleu).abs() <= 1e-9);
    }

    #[test]
    fn raising_reference_counts_never_lowers_precision(
        cand in prop::collection::vec(0u32..4, 1..10),
        refr in prop::collection::vec(0u32..4, 0..10),
        extra in prop::collection::vec(0u32..4, 1..5),
    ) {
        let before = corpus_stats(&[cand.clone()], &[refr.clone()]).unwrap();
        let mut longer = refr.clone();
        longer.push(99); // separator: adds no n-gram that the candidate can match across
        longer.extend(extra);
        let after = corpus_stats(&[cand], &[longer]).unwrap();
        for n in 1..=4 {
            prop_assert!(after.precision(n) >= before.precision(n));
        }
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    use rand::Rng;
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}
