//! Deterministic RNG stream derivation.
//!
//! Every randomized job (tree, fold, null permutation, grid cell) draws from
//! its own ChaCha stream derived from the user seed and a job index, so
//! results do not depend on thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer over `seed` and a stream index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG for job `stream` under `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

/// Two-level stream derivation, e.g. (fold, repeat).
pub fn rng_for2(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, a), b))
}

// Stream tags keep unrelated consumers of the same user seed independent.
pub const STREAM_TREES: u64 = 1;
pub const STREAM_FOLDS: u64 = 2;
pub const STREAM_NULL: u64 = 3;
pub const STREAM_PFI: u64 = 4;
pub const STREAM_SPLIT: u64 = 5;
pub const STREAM_CLUSTER: u64 = 6;
pub const STREAM_SURROGATE: u64 = 7;
pub const STREAM_IPFI: u64 = 8;
pub const STREAM_GEN: u64 = 9;
