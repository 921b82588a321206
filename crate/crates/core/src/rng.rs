//! Seed plumbing. Every stochastic component draws from its own ChaCha
//! stream so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a path of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(parent), |acc, &t| mix(acc ^ mix(t)))
}

pub fn rng_from(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used inside one trial.
pub mod stream {
    pub const PLACEMENT: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const PROPRIO: u64 = 3;
    pub const VISION: u64 = 4;
    pub const EXPLORE: u64 = 5;
    pub const OTHER: u64 = 6;
    pub const MDN_INIT: u64 = 7;
    pub const OTHER_SCHEDULE: u64 = 8;
    pub const CONTINGENCY: u64 = 9;
    pub const DATASET: u64 = 10;
}
