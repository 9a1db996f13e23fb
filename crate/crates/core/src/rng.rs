//! Seed derivation.
//!
//! Every random object is drawn from its own ChaCha8 stream whose seed is a
//! SplitMix64 hash of a base seed and a tuple of indices, so trial `i` of an
//! experiment sees the same numbers regardless of which worker runs it.
//! Gaussians come from `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tag for component matrices.
pub const STREAM_COMPONENTS: u64 = 0x636f_6d70;
/// Stream tag for initial iterates.
pub const STREAM_INIT: u64 = 0x696e_6974;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `base` together with `parts` into a new 64-bit seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, tag: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag]))
}
