//! Seed derivation. Every random stream in a run is a ChaCha generator keyed by
//! the run seed plus a stream label, so independent components never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream labels used across the crate.
pub mod stream {
    pub const LAYOUT: u64 = 1;
    pub const RESET: u64 = 2;
    pub const AGENT_INIT: u64 = 3;
    pub const AGENT_ACT: u64 = 4;
    pub const SHIELD: u64 = 5;
    pub const DATASET: u64 = 6;
    pub const TRAINING: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, index))
}
