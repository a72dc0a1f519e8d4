//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a 64-bit seed
//! mixed with a small tuple of stream identifiers, so results never depend on
//! scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`, producing an independent-looking child seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(0xA5A5_A5A5))))
}

pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Uniform value in [0, 1) from a hash, used for keyed lookups that must not
/// consume a sequential stream.
pub fn hash_unit(seed: u64, parts: &[u64]) -> f64 {
    (derive_seed(seed, parts) >> 11) as f64 / (1u64 << 53) as f64
}

// Stream tags. Kept in one place so no two call sites collide.
pub const TAG_PARAMS: u64 = 1;
pub const TAG_ENV_REWARD: u64 = 2;
pub const TAG_ENV_POLICY: u64 = 3;
pub const TAG_LOGGING: u64 = 4;
pub const TAG_GROUND_TRUTH: u64 = 5;
pub const TAG_UNIFORM_REWARD: u64 = 6;
pub const TAG_FOLDS: u64 = 7;
pub const TAG_MODEL: u64 = 8;
pub const TAG_SLOPE: u64 = 9;
pub const TAG_SPARSE_MASK: u64 = 10;
pub const TAG_SEARCH: u64 = 11;
pub const TAG_SPLIT: u64 = 12;
pub const TAG_BOOTSTRAP: u64 = 13;
pub const TAG_PASIF: u64 = 14;
pub const TAG_CONVERT: u64 = 15;
pub const TAG_TASK: u64 = 16;
pub const TAG_SELECTION: u64 = 17;
