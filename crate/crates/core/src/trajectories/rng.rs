//! Per-trajectory random streams.
//!
//! Trajectory `k` of an ensemble seeded with `base` draws from
//! `ChaCha8Rng::seed_from_u64(trajectory_seed(base, k))`. The seed mixing is a
//! pure function of `(base, k)`, so any trajectory can be replayed on its own
//! and the ensemble does not depend on how work is scheduled across threads.
//!
//! Draw order within a trajectory: one uniform to pick the initial eigenstate
//! (mixed initial states only), then per jump one threshold uniform followed by
//! one channel uniform. Changing any of this bumps [`RNG_STREAM_VERSION`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_STREAM_VERSION: u32 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in an ensemble with seed `base`.
pub fn trajectory_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
