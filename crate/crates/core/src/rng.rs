//! Seeding and sampling utilities.
//!
//! All randomness in the crate flows from explicit `u64` seeds through
//! ChaCha8 (a counter-based stream cipher), so any run is reproducible
//! from its config. Child seeds are derived by hashing
//! `(seed, role, index)` with a fixed mixer rather than by drawing from
//! a shared stream: adding parallelism or reordering work never changes
//! the randomness any consumer sees.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Derives a child seed from a parent seed, a role tag and an index.
///
/// FNV-1a over the role bytes, then two rounds of SplitMix64 finalization
/// over (seed, role hash, index). Stable across platforms.
pub fn derive_seed(seed: u64, role: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in role.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// A ChaCha8 stream for the given seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [0, 1) using the top 53 bits of one `u64`.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One standard normal draw via Box-Muller (cosine branch).
///
/// Consumes exactly two uniform draws per call; the sine branch is
/// discarded so the stream position is a pure function of call count.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - uniform(rng); // (0, 1]
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Fills a vector with standard normal draws.
pub fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}
