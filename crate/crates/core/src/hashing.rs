//! Content hashing helpers. All ids derived from content go through here so
//! that the hash function is fixed in one place.

use sha2::{Digest, Sha256};

pub fn sha256_bytes(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    hex::encode(sha256_bytes(data.as_ref()))
}

/// Hash of several parts separated by a NUL byte, so that `("ab", "c")` and
/// `("a", "bc")` never collide.
pub fn sha256_parts(parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0u8]);
        }
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

pub fn short_id(prefix: &str, data: impl AsRef<[u8]>) -> String {
    let full = sha256_hex(data);
    format!("{prefix}{}", &full[..16])
}
