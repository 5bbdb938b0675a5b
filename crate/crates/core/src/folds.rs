//! Fold assignments for cross-validation.

use rand::seq::SliceRandom;

use crate::rng::Rng;

/// Balanced assignment of `n` items to `k` folds: a uniform shuffle followed by
/// round-robin labels, so fold sizes differ by at most one.
pub fn shuffled_folds(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % k;
    }
    out
}

/// Fold labels with every label class spread round-robin over the folds, so
/// each fold has (up to one) the same class balance as the whole.
pub fn stratified_folds(labels: &[u8], k: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = vec![0; labels.len()];
    let mut offset = 0;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(rng);
        for (pos, &i) in idx.iter().enumerate() {
            out[i] = (pos + offset) % k;
        }
        // continue the rotation so small classes do not pile into fold 0
        offset = (offset + idx.len()) % k;
    }
    out
}
