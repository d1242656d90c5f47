//! Counter-based seed derivation.
//!
//! Every random stream in a run is keyed by a path of integers below a
//! single master seed, so streams never depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a key path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed.wrapping_add(GOLDEN)), |acc, &k| {
        mix(acc ^ mix(k.wrapping_add(GOLDEN).wrapping_mul(GOLDEN)))
    })
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the orchestrator.
pub mod tag {
    pub const SAMPLING: u64 = 1;
    pub const EVALUATION: u64 = 2;
    pub const REPLICATION: u64 = 3;
}
