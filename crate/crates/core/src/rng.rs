//! Seed derivation. Every random stream in the simulator is a ChaCha8 generator
//! keyed by a seed derived from the run seed and a tuple of tags, so streams
//! never depend on the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, kept distinct so that e.g. fading and mobility never alias.
pub mod tag {
    pub const EPISODE: u64 = 0x45_50;
    pub const TRAJECTORY: u64 = 0x54_52;
    pub const FADING: u64 = 0x46_41;
    pub const ACTION: u64 = 0x41_43;
    pub const SHUFFLE: u64 = 0x53_48;
    pub const INIT: u64 = 0x49_4e;
    pub const SCENARIO: u64 = 0x53_43;
    pub const EVAL: u64 = 0x45_56;
    pub const BOUND: u64 = 0x42_4f;
    pub const SWEEP: u64 = 0x53_57;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
