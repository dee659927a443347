//! Seed derivation and the crate-wide random number generator.
//!
//! Every generator is a [`ChaCha8Rng`] seeded from a 64-bit value. ChaCha8 is
//! portable and its output stream is fixed by the `rand_chacha` crate, so runs
//! replicate across platforms. Normal variates come from `rand_distr`'s
//! ziggurat transform of the uniform stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Folds several words into one seed, order-sensitive.
pub fn mix_all(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(seed, |acc, &w| mix(acc, w))
}

// Stream tags keep the derived seeds of different consumers apart.
pub(crate) const STREAM_MIXING: u64 = 1;
pub(crate) const STREAM_PARTITION: u64 = 2;
pub(crate) const STREAM_SOURCES: u64 = 3;
pub(crate) const STREAM_SOLVER: u64 = 4;
pub(crate) const STREAM_KMEANS: u64 = 5;
pub(crate) const STREAM_SHARED_INIT: u64 = 6;
