//! Seeded stratified train/test splitting.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Split indices into train and test sets, preserving per-class proportions
/// within one sample. Every class with at least one sample keeps at least
/// one training sample. Deterministic under the seed.
pub fn stratified_split(
    labels: &[u32],
    train_parts: u32,
    test_parts: u32,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let total_parts = (train_parts + test_parts) as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut indices) in by_class {
        indices.shuffle(&mut rng);
        let n_train = (indices.len() * train_parts as usize / total_parts).max(1);
        for (i, ix) in indices.into_iter().enumerate() {
            if i < n_train {
                train.push(ix);
            } else {
                test.push(ix);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
