//! SHA-256 helpers and canonical JSON encoding.

use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Lowercase hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Lowercase hex SHA-256 of a file's raw bytes, streamed.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Canonical JSON: object keys sorted, no insignificant whitespace, UTF-8.
///
/// `serde_json::Map` is backed by a `BTreeMap` (the `preserve_order` feature
/// is not enabled), so compact serialization of a `Value` already yields
/// sorted keys at every level.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("serializing a Value cannot fail")
}

/// Canonical bytes of any serializable value.
pub fn canonical_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("value serializes to JSON");
    canonical_json(&v).into_bytes()
}

/// Hash of the canonical JSON form of `value`.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&canonical_bytes(value))
}
