//! Seed plumbing.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose seed is
//! derived from a master seed plus a path of integer tags (run index, column
//! index, row index, ...). Output therefore depends only on the master seed
//! and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| {
        splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// A generator seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The seed to use for a run: the given one, or a fresh random seed unless
/// `strict` reproducibility is requested.
pub fn resolve_seed(seed: Option<u64>, strict: bool) -> crate::error::Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None if strict => Err(crate::error::KnockoffError::Contract(
            "a seed is required in strict reproducibility mode".into(),
        )),
        None => Ok(rand::random()),
    }
}
