//! Deterministic generator derivation.
//!
//! Every random stream in an experiment is keyed by `(seed, round, stream)` so
//! that a run resumed from a checkpoint draws exactly the numbers an
//! uninterrupted run would.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Seed of a named stream of a given round.
pub fn stream_seed(seed: u64, round: u64, stream: u64) -> u64 {
    mix(mix(mix(seed) ^ round) ^ stream.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

/// Independent generator for a named stream of a given round.
pub fn stream(seed: u64, round: u64, stream: u64) -> Rng {
    Rng::seed_from_u64(stream_seed(seed, round, stream))
}

/// Well-known stream identifiers.
pub mod streams {
    pub const DATASET: u64 = 1;
    pub const HELD_OUT: u64 = 2;
    pub const QUERIES: u64 = 3;
    pub const EMBED_INIT: u64 = 4;
    pub const EMBED_TRAIN: u64 = 5;
    pub const REWARD_INIT: u64 = 6;
    pub const REWARD_TRAIN: u64 = 7;
    pub const SELECTION: u64 = 8;
}
