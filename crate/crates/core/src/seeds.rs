//! Labeled seed derivation: every stage draws from its own stream of the root seed.

use sha2::{Digest, Sha256};

/// First 8 bytes (little-endian) of `SHA-256(root_le ‖ label)`.
pub fn derive(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn derive_indexed(root: u64, label: &str, index: u64) -> u64 {
    derive(root, &format!("{label}/{index}"))
}
