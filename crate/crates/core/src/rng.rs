//! Seed derivation. Every stochastic component gets its own stream derived
//! from the scenario seed plus a fixed label, so streams never overlap and
//! adding a consumer does not shift the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a sequence of keys.
pub fn derive(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(seed), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Stable 64-bit key for a label.
pub fn label(s: &str) -> u64 {
    // FNV-1a
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, name: &str, keys: &[u64]) -> SimRng {
    let mut all = Vec::with_capacity(keys.len() + 1);
    all.push(label(name));
    all.extend_from_slice(keys);
    SimRng::seed_from_u64(derive(seed, &all))
}
