//! Random dataset pruning with deterministic seeds.

use super::DatasetError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The fraction grid used by the pruning studies.
pub const PRUNE_FRACTION_PRESETS: [f64; 14] = [
    0.02, 0.04, 0.06, 0.08, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 1.00,
];

/// Uniformly random subset of `⌈fraction·n⌉` entries, deterministic under
/// `seed`, preserving the original relative order.
pub fn prune_dataset<T: Clone>(
    index: &[T],
    fraction: f64,
    seed: u64,
) -> Result<Vec<T>, DatasetError> {
    if index.is_empty() {
        return Err(DatasetError::InvalidInput("empty dataset".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::InvalidInput(format!(
            "fraction {fraction} outside (0,1]"
        )));
    }
    let n = index.len();
    let keep = ((fraction * n as f64).ceil() as usize).min(n);
    let mut positions: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher–Yates: the first `keep` slots are the sample.
    for i in 0..keep {
        let j = rng.gen_range(i..n);
        positions.swap(i, j);
    }
    let mut chosen = positions[..keep].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| index[i].clone()).collect())
}
