//! Canonical JSON: sorted keys, no insignificant whitespace, non-integral
//! numbers as fixed 4-decimal literals, integers verbatim.
//!
//! This byte format is what the audit log hashes and what golden fixtures
//! compare against.

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::model::TriageRecord;
use crate::schema::{validate, validate_record, SchemaViolation};

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("record fails schema validation ({} violations)", .0.len())]
    Invalid(Vec<SchemaViolation>),
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

/// Canonical bytes of any serializable value.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError::Serialize(e.to_string()))?;
    Ok(value_to_canonical(&v))
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> Result<String, CanonicalError> {
    // canonical output is always valid UTF-8
    to_canonical_bytes(value).map(|b| String::from_utf8(b).expect("utf-8"))
}

pub fn value_to_canonical(v: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    write_value(v, &mut out);
    out
}

fn write_value(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.extend_from_slice(n.to_string().as_bytes());
            } else {
                let f = n.as_f64().unwrap_or(0.0);
                let s = format!("{f:.4}");
                if s == "-0.0000" {
                    out.extend_from_slice(b"0.0000");
                } else {
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        Value::String(s) => {
            // serde_json string escaping is deterministic
            out.extend_from_slice(serde_json::to_string(s).expect("string").as_bytes());
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(serde_json::to_string(key).expect("key").as_bytes());
                out.push(b':');
                write_value(&map[key], out);
            }
            out.push(b'}');
        }
    }
}

/// Serializes a valid record to its canonical bytes.
pub fn canonical_serialize(record: &TriageRecord) -> Result<Vec<u8>, CanonicalError> {
    let violations = validate(record);
    if !violations.is_empty() {
        return Err(CanonicalError::Invalid(violations));
    }
    to_canonical_bytes(record)
}

/// Parses text into a JSON document, reporting the error position.
pub fn parse_document(text: &str) -> Result<Value, CanonicalError> {
    serde_json::from_str(text).map_err(|e| CanonicalError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates a record.
pub fn parse_record(text: &str) -> Result<TriageRecord, CanonicalError> {
    let doc = parse_document(text)?;
    let violations = validate_record(&doc);
    if !violations.is_empty() {
        return Err(CanonicalError::Invalid(violations));
    }
    serde_json::from_value(doc).map_err(|e| CanonicalError::Serialize(e.to_string()))
}
