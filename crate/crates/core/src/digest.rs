//! SHA-256 content digests rendered as lowercase hex.

use alloc::string::String;
use core::fmt::Write;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Digest of a sequence of float vectors, hashing the exact bit patterns.
pub fn vectors_digest<'a>(rows: impl IntoIterator<Item = (&'a str, &'a [f64])>) -> String {
    let mut h = Sha256::new();
    for (label, v) in rows {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update((v.len() as u64).to_le_bytes());
        for x in v {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    let mut s = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(s, "{b:02x}");
    }
    s
}
