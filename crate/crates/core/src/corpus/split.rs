use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by a three-way cut. Train and validation sizes
/// are `round(n·ratio)`; test takes the remainder.
pub fn split_corpus<T>(corpus: Vec<T>, seed: u64, ratios: [f64; 3]) -> Result<Splits<T>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n = corpus.len();
    let n_train = (n as f64 * ratios[0]).round() as usize;
    let n_valid = ((n as f64 * ratios[1]).round() as usize).min(n - n_train.min(n));
    let n_test = n.saturating_sub(n_train + n_valid);
    if n_train == 0 || (ratios[1] > 0.0 && n_valid == 0) || (ratios[2] > 0.0 && n_test == 0) {
        return Err(Error::Config(format!(
            "split of {n} records by {ratios:?} leaves an empty partition ({n_train}/{n_valid}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut slots: Vec<Option<T>> = corpus.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<T> { ids.iter().map(|&i| slots[i].take().expect("each index once")).collect() };
    let train = take(&order[..n_train]);
    let valid = take(&order[n_train..n_train + n_valid]);
    let test = take(&order[n_train + n_valid..]);
    Ok(Splits { train, valid, test })
}
