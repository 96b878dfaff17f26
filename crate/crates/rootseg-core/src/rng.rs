//! Seed derivation for reproducible, independently seeded sub-streams.
//!
//! Every stochastic stage of the pipeline (scene generation, instance
//! selection, augmentation, optimizer init) draws from its own ChaCha
//! stream whose seed is derived from the run seed plus structural
//! coordinates (epoch, image index, tile index). Resuming a run therefore
//! replays exactly the draws a continuous run would have made.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full-avalanche mixing of a 64-bit word.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and two stream coordinates.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    mix(mix(base ^ stream.wrapping_mul(0xa076_1d64_78bd_642f)) ^ index)
}

/// ChaCha generator for a derived sub-stream.
pub fn stream_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// ChaCha generator seeded directly.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
