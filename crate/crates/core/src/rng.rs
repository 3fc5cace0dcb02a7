//! Deterministic seed derivation for replicate streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a replicate index and a stream label.
pub fn derive_seed(base_seed: u64, replicate: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ replicate) ^ stream.wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn stream_rng(base_seed: u64, replicate: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base_seed, replicate, stream))
}

/// Stream labels used across the crate.
pub mod streams {
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const FRESH_NOISE: u64 = 3;
    pub const TESTBED: u64 = 4;
    pub const RFF_DRAW: u64 = 5;
}
