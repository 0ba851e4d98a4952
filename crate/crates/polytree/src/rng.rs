//! Seed derivation for reproducible, non-overlapping RNG streams.
//!
//! Every randomized operation in this crate takes a 64-bit seed by value.
//! Sub-streams (one per trial, per grid point, ...) are derived by hashing the
//! master seed together with integer tags, so concurrent trials never share
//! RNG state. The contract is reproducibility across runs on the same build.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche for seed mixing.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed with a sequence of tags into a derived seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(master);
    for &t in tags {
        h = mix64(h ^ t.wrapping_mul(0xd134_2543_de82_ef95));
    }
    h
}

/// A deterministic generator for the given seed.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// A deterministic generator for a derived sub-stream.
pub fn stream_rng(master: u64, tags: &[u64]) -> ChaCha12Rng {
    seeded_rng(derive_seed(master, tags))
}
