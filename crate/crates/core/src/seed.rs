//! Stable seed derivation.
//!
//! Every random stream in the toolkit is a `ChaCha8Rng` keyed by a 64-bit
//! seed. Child seeds are derived by hashing the parent seed together with a
//! label and an index, so results never depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive a child seed from `(seed, label, index)`.
pub fn derive(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    first_u64(&h.finalize())
}

/// Derive a child seed keyed by a string (usually an utterance id).
pub fn derive_str(seed: u64, label: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(key.as_bytes());
    first_u64(&h.finalize())
}

pub fn hash_bytes(bytes: &[u8]) -> u64 {
    first_u64(&Sha256::digest(bytes))
}

/// Hex SHA-256 of arbitrary bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn first_u64(bytes: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[..8]);
    u64::from_le_bytes(buf)
}
