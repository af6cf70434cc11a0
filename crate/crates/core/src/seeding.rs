//! Seed derivation. Every random stream in the crate is keyed by an explicit
//! 64-bit seed plus a path of integers, so results never depend on iteration
//! or completion order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of labels.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &x| mix64(acc ^ mix64(x)))
}

/// A generator for the given seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generator for one row of a per-row stream: same key, distinct ChaCha stream.
pub fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

// Stream labels, kept distinct so that sibling streams never collide.
pub(crate) const LABEL_GSM_FIRST: u64 = 0x5EED_0001;
pub(crate) const LABEL_GSM_SECOND: u64 = 0x5EED_0002;
pub(crate) const LABEL_SOLVE: u64 = 0x5EED_0003;
pub(crate) const LABEL_RETRY: u64 = 0x5EED_0004;
