//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose 256-bit key is
//! derived from a user seed and a list of integer tags (stage, sweep, position,
//! block, ...) with the SplitMix64 finaliser. Two streams with different tags are
//! independent for all practical purposes, and a stream depends only on its tags,
//! so work split across threads reproduces bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and tags into a single 64-bit word.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Builds the generator for `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    let mut key = [0u8; 32];
    let mut h = mix(seed, tags);
    for chunk in key.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Stage tags used across the crate, kept distinct so streams never collide.
pub mod tag {
    pub const SAMPLE: u64 = 1;
    pub const KSAT_VAR: u64 = 2;
    pub const KSAT_CONS: u64 = 3;
    pub const KSAT_MEASURE: u64 = 4;
    pub const QCOL_SWEEP: u64 = 5;
    pub const QCOL_MEASURE: u64 = 6;
    pub const INIT: u64 = 7;
    pub const DAMPING: u64 = 8;
    pub const ORACLE: u64 = 9;
    pub const THRESHOLD: u64 = 10;
    pub const TREE: u64 = 11;
}
