//! Content hashes that chain output files to their inputs.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats a float with 17 significant digits; parses back bit-exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
