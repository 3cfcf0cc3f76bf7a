//! Deterministic random streams.
//!
//! Every trajectory, worker or repetition draws from its own ChaCha8 stream
//! keyed by `(seed, purpose)` and selected by an index, so results never
//! depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream families. Distinct purposes never share a key.
pub mod purpose {
    pub const FPT: u64 = 1;
    pub const FRACTION: u64 = 2;
    pub const PANEL: u64 = 3;
    pub const HISTOGRAM: u64 = 4;
    pub const ENSEMBLE: u64 = 5;
    pub const FIT_REPETITION: u64 = 6;
    pub const FIT_NOISE: u64 = 7;
    pub const PARAM_DRAWS: u64 = 8;
    pub const SYNTHETIC: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. one per fit repetition.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(purpose)) ^ index)
}

pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(purpose)));
    rng.set_stream(index);
    rng
}
