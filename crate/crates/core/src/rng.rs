//! Seed derivation for independent deterministic streams.
//!
//! All randomness in the crate flows from explicit `u64` seeds through
//! `StdRng`. `mix` derives child seeds (per client, per round, per purpose)
//! so that runs are bit-reproducible and sub-streams stay decorrelated.

use rand::rngs::StdRng;
use rand::SeedableRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream index.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_mul(0xA24B_AED4_963E_E407)))
}

pub fn rng_from(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
