//! Seed-splitting for reproducible parallel replication.
//!
//! Every Monte-Carlo driver in this crate derives one independent generator
//! per replicate as `ChaCha12(splitmix64(master_seed XOR replicate_index))`.
//! Workers can then process replicates in any order while the stream drawn
//! for replicate `r` is a pure function of `(master_seed, r)`.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer; decorrelates the trivially related keys
/// `seed ^ 0, seed ^ 1, ...`.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The generator assigned to replicate `index` of a run keyed by `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(splitmix64(seed ^ index))
}
