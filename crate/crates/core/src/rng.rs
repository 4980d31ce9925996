//! Deterministic stream derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream derived from
//! (base seed, purpose tag, indices). Streams are independent of thread
//! scheduling, so any parallel schedule reproduces the serial results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; used for tag/name hashing and artifact fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Mix a base seed, a purpose tag and an index tuple into one 64-bit seed.
pub fn mix(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(seed ^ fnv1a(tag.as_bytes()));
    for &p in parts {
        acc = splitmix64(acc ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    acc
}

/// Derive an independent ChaCha stream for (seed, tag, parts).
pub fn stream(seed: u64, tag: &str, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tag, parts))
}
