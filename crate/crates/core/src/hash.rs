//! Stable, platform-independent 64-bit hashing and seed derivation.
//!
//! Everything downstream that needs reproducibility (fingerprint bit
//! assignment, per-client RNG streams, subsampling) goes through these
//! functions rather than `std::hash`, whose output is not stable across
//! runs or platforms.

/// SplitMix64 finalizer. Good avalanche, trivially portable.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Hash a sequence of words into one value; order-sensitive.
pub fn hash_words(words: &[u64]) -> u64 {
    let mut acc = 0x51_7c_c1_b7_27_22_0a_95u64;
    for &w in words {
        acc = splitmix64(acc ^ w);
    }
    splitmix64(acc ^ words.len() as u64)
}

/// Hash arbitrary bytes (used for strings in seed derivation).
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut acc = 0xcb_f2_9c_e4_84_22_23_25u64;
    for chunk in bytes.chunks(8) {
        let mut w = [0u8; 8];
        w[..chunk.len()].copy_from_slice(chunk);
        acc = splitmix64(acc ^ u64::from_le_bytes(w));
    }
    splitmix64(acc ^ bytes.len() as u64)
}

/// Derive an independent RNG seed from a master seed and a stream label.
///
/// Distinct labels give statistically independent streams, so parallel
/// schedules cannot reorder draws within one stream.
pub fn derive_seed(master: u64, label: &str, parts: &[u64]) -> u64 {
    let mut words = Vec::with_capacity(parts.len() + 2);
    words.push(master);
    words.push(hash_bytes(label.as_bytes()));
    words.extend_from_slice(parts);
    hash_words(&words)
}
