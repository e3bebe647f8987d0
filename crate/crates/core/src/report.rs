//! Canonical JSON emission and the reproducibility header.
//!
//! Canonical form: object keys sorted, two-space indentation, floats written
//! with 17 significant digits in exponent form, integers as integers,
//! non-finite floats as `null`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL: &str = "aucal";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the input bytes, hex.
    pub input_digest: Option<String>,
    pub command: String,
}

impl Header {
    pub fn new(command: &str, seed: Option<u64>, input: Option<&[u8]>) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            seed,
            input_digest: input.map(sha256_hex),
            command: command.into(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    if v == 0.0 {
        return "0.0000000000000000e0".into();
    }
    format!("{v:.16e}")
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_f64(n.as_f64().unwrap()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(out, &map[*k], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON text for any serializable value, newline-terminated.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize + ?Sized> {
    header: &'a Header,
    report: &'a T,
}

/// `{"header": ..., "report": ...}` in canonical form.
pub fn report_json<T: Serialize + ?Sized>(header: &Header, report: &T) -> Result<String> {
    canonical_json(&Envelope { header, report })
}

pub fn write_report<T: Serialize + ?Sized>(path: impl AsRef<Path>, header: &Header, report: &T) -> Result<()> {
    std::fs::write(path, report_json(header, report)?)?;
    Ok(())
}
