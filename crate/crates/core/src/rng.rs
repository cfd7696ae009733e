//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` master seed. Independent
//! streams (restarts, attempts, Monte Carlo workers) are derived by mixing the
//! master seed with a stream index, then seeding a ChaCha generator, which is
//! counter-based and identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `stream` from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed ^ 0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(stream.wrapping_add(1))))
}

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, stream))
}
