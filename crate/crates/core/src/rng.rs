//! Counter-based seed derivation.
//!
//! Every random draw in the crate descends from one 64-bit seed. A
//! generator for a particular purpose is addressed by `(seed, stream, index)`
//! and built by mixing the three words with SplitMix64 and seeding a
//! ChaCha8 generator with the result. Work items that run in parallel each
//! own a distinct `index`, so results never depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::C64;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers used across the crate.
pub mod streams {
    pub const SIGNAL: u64 = 1;
    pub const BASIS: u64 = 2;
    pub const AMBIGUITY: u64 = 3;
    pub const GROUP: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const SUPPORT: u64 = 6;
    pub const RESTART: u64 = 7;
    pub const TRIAL: u64 = 8;
    pub const FIT: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(seed, stream, index)` into a single 64-bit seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn stream_rng(seed: u64, stream: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, stream, index))
}

pub fn seeded(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Circular complex Gaussian with `E|z|^2 = 1`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(s * gaussian(rng), s * gaussian(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_separate_streams_and_indices() {
        let a = derive_seed(7, 1, 0);
        assert_ne!(a, derive_seed(7, 2, 0));
        assert_ne!(a, derive_seed(7, 1, 1));
        assert_ne!(a, derive_seed(8, 1, 0));
        assert_eq!(a, derive_seed(7, 1, 0));
    }

    #[test]
    fn complex_gaussian_has_unit_power() {
        let mut rng = seeded(3);
        let n = 20_000;
        let p: f64 = (0..n).map(|_| complex_gaussian(&mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.05, "power {p}");
    }
}
