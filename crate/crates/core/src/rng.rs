//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a sequence of tags.
///
/// Different tag sequences give statistically independent streams, so
/// e.g. `(master, [episode])` never collides with `(master, [goal, 1])`
/// in practice.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix(master ^ 0x5CE7_4A11_D00D_F00D);
    for (i, &t) in tags.iter().enumerate() {
        h = mix(h ^ mix(t.wrapping_add((i as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407))));
    }
    h
}

/// Hashes a string tag into a seed component.
pub fn tag(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
