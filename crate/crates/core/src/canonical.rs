//! Canonical JSON encoding and SHA-256 helpers shared by every digest in the crate.
//!
//! The canonical form is compact UTF-8 JSON with object keys sorted by their
//! byte representation and numbers in serde_json's shortest round-trip form.
//! Key order is enforced here rather than relying on `serde_json::Map`, whose
//! ordering depends on crate features.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Encodes `value` in canonical form.
pub fn to_canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out);
    out
}

/// Serializes any `Serialize` type through `serde_json::Value` into canonical form.
pub fn canonical_bytes_of<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    Ok(to_canonical_bytes(&serde_json::to_value(value)?))
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_scalar(&Value::String(k.clone()), out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(v, out);
            }
            out.push(b']');
        }
        scalar => write_scalar(scalar, out),
    }
}

fn write_scalar(value: &Value, out: &mut Vec<u8>) {
    // Scalars never contain maps, so serde_json's compact writer is canonical for them.
    serde_json::to_writer(&mut *out, value).expect("writing a JSON scalar to a Vec cannot fail");
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// True when `s` is a 64-character lowercase hex digest.
pub fn is_hex_digest(s: &str) -> bool {
    s.len() == 64
        && s.bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}
