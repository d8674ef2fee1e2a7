//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is keyed by a master seed plus a
//! path of integers (user id, sweep level, draw, ...). Streams never share
//! state, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `master`, one component at a time.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p.wrapping_add(GOLDEN))))
}

pub fn rng(master: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, so that unrelated consumers of the same path never collide.
pub mod stream {
    pub const SCENARIO_USER: u64 = 1;
    pub const SCENARIO_BEACON: u64 = 2;
    pub const FLIP: u64 = 10;
    pub const SPLIT: u64 = 11;
    pub const MODEL: u64 = 12;
    pub const RANDOM_BASELINE: u64 = 13;
    pub const GRID: u64 = 14;
    pub const CV_FOLDS: u64 = 15;
}
