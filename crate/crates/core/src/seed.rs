//! Deterministic random stream derivation.
//!
//! Every independent unit of work (episode, Monte Carlo trial, grid point)
//! owns a stream seeded from a base seed and a path of integer labels, so
//! results do not depend on worker count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a label path into a base seed: `base ^ hash(path)`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3_u64;
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    base ^ h
}

pub fn rng_from(base: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream labels, kept distinct so unrelated consumers never share a stream.
pub mod label {
    pub const INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const INNER: u64 = 3;
    pub const UPDATE: u64 = 4;
    pub const TASKS: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const TRIAL: u64 = 7;
    pub const ADAPT: u64 = 8;
    pub const GRAPE: u64 = 9;
}
