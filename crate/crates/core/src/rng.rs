//! Seeded random draws.
//!
//! Every random quantity in the toolkit comes from a single SplitMix64 stream
//! (Steele, Lea & Flood). Integer draws are the raw 64-bit outputs, so ports
//! in other languages reproduce them exactly. Floats are built as
//! `(next_u64() >> 11) * 2^-53`, a uniform draw on `[0, 1)`.

use rand::RngCore;
use rand::SeedableRng;
pub use rand_xoshiro::SplitMix64;

pub fn generator(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Uniform draw on `[0, 1)` with 53 random mantissa bits.
pub fn unit(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn uniform(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit(rng)
}
