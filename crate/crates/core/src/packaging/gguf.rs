//! GGUF header and key-value metadata reader, plus suspicious-template scanning
//! over metadata strings. Tensor info and tensor data are never read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::finding::Finding;
use super::policy::{PolicyConfig, TemplateMatcher};
use super::ScanError;

pub const GGUF_MAGIC: &[u8; 4] = b"GGUF";
const THREAT_TEMPLATE_INJECTION: &str = "3.5";
/// Arrays longer than this are summarized (length plus leading items).
const ARRAY_KEEP: usize = 16;
/// Longest excerpt copied into finding evidence.
const EXCERPT_CHARS: usize = 120;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum GgufValue {
    Uint(u64),
    Int(i64),
    Float(f64),
    Bool(bool),
    String(String),
    Array {
        #[serde(rename = "type")]
        elem_type: &'static str,
        len: u64,
        /// The first items, or all of them for short arrays.
        items: Vec<GgufValue>,
    },
}

impl GgufValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            GgufValue::String(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GgufMetadata {
    pub version: u32,
    pub tensor_count: u64,
    pub kv_count: u64,
    pub metadata: BTreeMap<String, GgufValue>,
}

struct Cursor<R> {
    inner: R,
    pos: u64,
    len: u64,
    version: u32,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ScanError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| self.eof(e))?;
        self.pos += N as u64;
        Ok(buf)
    }

    fn eof(&self, e: io::Error) -> ScanError {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            ScanError::TruncatedMetadata(self.pos)
        } else {
            ScanError::Io {
                path: "<gguf>".into(),
                source: e,
            }
        }
    }

    fn u32(&mut self) -> Result<u32, ScanError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, ScanError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    /// Counts and lengths are 32-bit in version 1 and 64-bit afterwards.
    fn count(&mut self) -> Result<u64, ScanError> {
        if self.version == 1 {
            self.u32().map(u64::from)
        } else {
            self.u64()
        }
    }

    fn remaining(&self) -> u64 {
        self.len.saturating_sub(self.pos)
    }

    fn string(&mut self) -> Result<String, ScanError> {
        let at = self.pos;
        let n = self.count()?;
        if n > self.remaining() {
            return Err(ScanError::TruncatedMetadata(at));
        }
        let mut buf = vec![0u8; n as usize];
        self.inner.read_exact(&mut buf).map_err(|e| self.eof(e))?;
        self.pos += n;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    fn value(&mut self, ty: u32, depth: usize) -> Result<GgufValue, ScanError> {
        let at = self.pos;
        Ok(match ty {
            0 => GgufValue::Uint(u8::from_le_bytes(self.bytes()?) as u64),
            1 => GgufValue::Int(i8::from_le_bytes(self.bytes()?) as i64),
            2 => GgufValue::Uint(u16::from_le_bytes(self.bytes()?) as u64),
            3 => GgufValue::Int(i16::from_le_bytes(self.bytes()?) as i64),
            4 => GgufValue::Uint(self.u32()? as u64),
            5 => GgufValue::Int(i32::from_le_bytes(self.bytes()?) as i64),
            6 => GgufValue::Float(f32::from_le_bytes(self.bytes()?) as f64),
            7 => GgufValue::Bool(self.bytes::<1>()?[0] != 0),
            8 => GgufValue::String(self.string()?),
            9 => {
                if depth > 4 {
                    return Err(ScanError::TruncatedMetadata(at));
                }
                let elem = self.u32()?;
                let len = self.count()?;
                // Every element takes at least one byte; a longer count cannot fit.
                if len > self.remaining() {
                    return Err(ScanError::TruncatedMetadata(at));
                }
                let mut items = Vec::with_capacity(len.min(ARRAY_KEEP as u64) as usize);
                for i in 0..len {
                    let v = self.value(elem, depth + 1)?;
                    if (i as usize) < ARRAY_KEEP {
                        items.push(v);
                    }
                }
                GgufValue::Array {
                    elem_type: type_name(elem),
                    len,
                    items,
                }
            }
            10 => GgufValue::Uint(self.u64()?),
            11 => GgufValue::Int(i64::from_le_bytes(self.bytes()?)),
            12 => GgufValue::Float(f64::from_le_bytes(self.bytes()?)),
            _ => return Err(ScanError::TruncatedMetadata(at)),
        })
    }
}

fn type_name(ty: u32) -> &'static str {
    match ty {
        0 => "uint8",
        1 => "int8",
        2 => "uint16",
        3 => "int16",
        4 => "uint32",
        5 => "int32",
        6 => "float32",
        7 => "bool",
        8 => "string",
        9 => "array",
        10 => "uint64",
        11 => "int64",
        12 => "float64",
        _ => "unknown",
    }
}

/// Parses a GGUF file's header and metadata and, unless disabled by policy,
/// matches every string value against the suspicious-template patterns.
pub fn scan_gguf_metadata(
    path: &Path,
    policy: &PolicyConfig,
) -> Result<(GgufMetadata, Vec<Finding>), ScanError> {
    let file = File::open(path).map_err(|e| ScanError::io(path, e))?;
    let len = file.metadata().map_err(|e| ScanError::io(path, e))?.len();
    let (meta, findings) = read_gguf(BufReader::new(file), len, policy).map_err(|e| match e {
        ScanError::Io { source, .. } => ScanError::io(path, source),
        other => other,
    })?;
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((meta, relabel(findings, &label)))
}

fn relabel(mut findings: Vec<Finding>, label: &str) -> Vec<Finding> {
    for f in &mut findings {
        f.path = label.to_string();
    }
    findings
}

/// Parses GGUF metadata from any reader of `len` bytes.
pub fn read_gguf<R: Read>(
    reader: R,
    len: u64,
    policy: &PolicyConfig,
) -> Result<(GgufMetadata, Vec<Finding>), ScanError> {
    let mut c = Cursor {
        inner: reader,
        pos: 0,
        len,
        version: 0,
    };
    let magic: [u8; 4] = c.bytes().map_err(|_| ScanError::NotGguf)?;
    if &magic != GGUF_MAGIC {
        return Err(ScanError::NotGguf);
    }
    let version = c.u32()?;
    if !(1..=3).contains(&version) {
        return Err(ScanError::UnsupportedGgufVersion(version));
    }
    c.version = version;
    let tensor_count = c.count()?;
    let kv_count = c.count()?;
    // Each pair needs at least a key length, a type tag and one value byte.
    if kv_count > c.remaining() / 9 + 1 {
        return Err(ScanError::TruncatedMetadata(c.pos));
    }
    let mut metadata = BTreeMap::new();
    for _ in 0..kv_count {
        let key = c.string()?;
        let ty = c.u32()?;
        let value = c.value(ty, 0)?;
        metadata.insert(key, value);
    }
    let meta = GgufMetadata {
        version,
        tensor_count,
        kv_count,
        metadata,
    };
    let findings = if policy.scan_gguf_metadata {
        scan_metadata_strings(&meta, &policy.matcher())
    } else {
        Vec::new()
    };
    Ok((meta, findings))
}

fn scan_metadata_strings(meta: &GgufMetadata, matcher: &TemplateMatcher) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (key, value) in &meta.metadata {
        let mut strings = Vec::new();
        collect_strings(value, &mut strings);
        for s in strings {
            findings.extend(scan_template_text("", key, s, matcher));
        }
    }
    findings
}

fn collect_strings<'a>(v: &'a GgufValue, out: &mut Vec<&'a str>) {
    match v {
        GgufValue::String(s) => out.push(s),
        GgufValue::Array { items, .. } => items.iter().for_each(|i| collect_strings(i, out)),
        _ => {}
    }
}

/// True for metadata keys that hold chat templates.
pub fn is_template_key(key: &str) -> bool {
    key.contains("chat_template")
}

/// Matches one metadata string. Hits inside chat-template keys are Critical,
/// hits elsewhere Warn; both reference threat 3.5.
pub fn scan_template_text(
    path: &str,
    key: &str,
    text: &str,
    matcher: &TemplateMatcher,
) -> Vec<Finding> {
    matcher
        .matches(text)
        .map(|(pattern, excerpt)| {
            let excerpt: String = excerpt.chars().take(EXCERPT_CHARS).collect();
            let evidence = json!({"key": key, "pattern": pattern, "excerpt": excerpt});
            if is_template_key(key) {
                Finding::critical(
                    "template.injection",
                    THREAT_TEMPLATE_INJECTION,
                    path,
                    format!("chat template {key} matches suspicious pattern {pattern:?}"),
                )
                .with_evidence(evidence)
            } else {
                Finding::warn(
                    "template.suspicious_metadata",
                    Some(THREAT_TEMPLATE_INJECTION),
                    path,
                    format!("metadata {key} matches suspicious pattern {pattern:?}"),
                )
                .with_evidence(evidence)
            }
        })
        .collect()
}

/// Scans chat templates outside GGUF: `chat_template` in tokenizer configs
/// (string or list of named templates) and standalone `.jinja` files.
pub fn scan_template_file(rel: &str, bytes: &[u8], matcher: &TemplateMatcher) -> Vec<Finding> {
    if rel.to_ascii_lowercase().ends_with(".jinja") {
        return scan_template_text(
            rel,
            "chat_template",
            &String::from_utf8_lossy(bytes),
            matcher,
        );
    }
    let Ok(Value::Object(obj)) = serde_json::from_slice::<Value>(bytes) else {
        return Vec::new();
    };
    let mut findings = Vec::new();
    match obj.get("chat_template") {
        Some(Value::String(t)) => {
            findings.extend(scan_template_text(rel, "chat_template", t, matcher))
        }
        Some(Value::Array(list)) => {
            for entry in list {
                if let (Some(name), Some(t)) = (
                    entry.get("name").and_then(Value::as_str),
                    entry.get("template").and_then(Value::as_str),
                ) {
                    findings.extend(scan_template_text(
                        rel,
                        &format!("chat_template.{name}"),
                        t,
                        matcher,
                    ));
                }
            }
        }
        _ => {}
    }
    findings
}

/// Serializes a metadata-only GGUF (zero tensors). Used by fixtures and tests.
pub fn encode_gguf(version: u32, kvs: &[(&str, GgufValue)]) -> Vec<u8> {
    fn count(out: &mut Vec<u8>, version: u32, n: u64) {
        if version == 1 {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        } else {
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
    fn string(out: &mut Vec<u8>, version: u32, s: &str) {
        count(out, version, s.len() as u64);
        out.extend_from_slice(s.as_bytes());
    }
    fn tag(v: &GgufValue) -> u32 {
        match v {
            GgufValue::Uint(_) => 10,
            GgufValue::Int(_) => 11,
            GgufValue::Float(_) => 12,
            GgufValue::Bool(_) => 7,
            GgufValue::String(_) => 8,
            GgufValue::Array { .. } => 9,
        }
    }
    fn value(out: &mut Vec<u8>, version: u32, v: &GgufValue) {
        match v {
            GgufValue::Uint(u) => out.extend_from_slice(&u.to_le_bytes()),
            GgufValue::Int(i) => out.extend_from_slice(&i.to_le_bytes()),
            GgufValue::Float(f) => out.extend_from_slice(&f.to_le_bytes()),
            GgufValue::Bool(b) => out.push(*b as u8),
            GgufValue::String(s) => string(out, version, s),
            GgufValue::Array { items, .. } => {
                let elem = items.first().map_or(8, tag);
                out.extend_from_slice(&elem.to_le_bytes());
                count(out, version, items.len() as u64);
                items.iter().for_each(|i| value(out, version, i));
            }
        }
    }
    let mut out = GGUF_MAGIC.to_vec();
    out.extend_from_slice(&version.to_le_bytes());
    count(&mut out, version, 0);
    count(&mut out, version, kvs.len() as u64);
    for (k, v) in kvs {
        string(&mut out, version, k);
        out.extend_from_slice(&tag(v).to_le_bytes());
        value(&mut out, version, v);
    }
    out
}
