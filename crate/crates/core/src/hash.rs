//! Deterministic seed derivation and config hashing.
//!
//! Every random draw in the harness flows from one base seed. Subsystems
//! derive their own seeds by hashing `(base_seed, label, indices...)`, so
//! parallel and serial execution produce identical streams and a run is
//! reproducible from its config alone.

use sha2::{Digest, Sha256};

/// Derive a child seed from a base seed, a subsystem label, and indices.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update([0xff]);
    h.update(label.as_bytes());
    for ix in indices {
        h.update([0xfe]);
        h.update(ix.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Hex-encoded SHA-256 of a byte string; used to fingerprint configs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
