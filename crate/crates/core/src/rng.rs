//! Seedable RNG streams.
//!
//! Every trajectory owns its own ChaCha8 stream derived from a master seed and
//! the trajectory index by a SplitMix64 mix, so ensemble results do not depend
//! on worker count or scheduling order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(master ^ index.wrapping_mul(GOLDEN_GAMMA))
}

pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, index))
}

/// Exp(1) variate by inverse CDF; finite for all draws.
pub fn exp1<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen(); // [0, 1)
    -(1.0 - u).ln()
}

/// Standard normal pair via Box-Muller.
pub fn normal_pair<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = (-2.0 * (1.0 - u1).ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Single standard normal (discards the Box-Muller twin).
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    normal_pair(rng).0
}
