//! Safetensors header parsing and validation. Tensor data is never read here.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::finding::Finding;
use super::ScanError;

/// Headers above this size are rejected outright.
pub const MAX_HEADER_LEN: u64 = 100 * 1024 * 1024;

const THREAT: &str = "2.1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "BOOL")]
    Bool,
    U8,
    I8,
    #[serde(rename = "F8_E4M3")]
    F8E4M3,
    #[serde(rename = "F8_E5M2")]
    F8E5M2,
    I16,
    U16,
    F16,
    BF16,
    I32,
    U32,
    F32,
    F64,
    I64,
    U64,
}

impl Dtype {
    pub fn width(self) -> u64 {
        match self {
            Dtype::Bool | Dtype::U8 | Dtype::I8 | Dtype::F8E4M3 | Dtype::F8E5M2 => 1,
            Dtype::I16 | Dtype::U16 | Dtype::F16 | Dtype::BF16 => 2,
            Dtype::I32 | Dtype::U32 | Dtype::F32 => 4,
            Dtype::F64 | Dtype::I64 | Dtype::U64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::Bool => "BOOL",
            Dtype::U8 => "U8",
            Dtype::I8 => "I8",
            Dtype::F8E4M3 => "F8_E4M3",
            Dtype::F8E5M2 => "F8_E5M2",
            Dtype::I16 => "I16",
            Dtype::U16 => "U16",
            Dtype::F16 => "F16",
            Dtype::BF16 => "BF16",
            Dtype::I32 => "I32",
            Dtype::U32 => "U32",
            Dtype::F32 => "F32",
            Dtype::F64 => "F64",
            Dtype::I64 => "I64",
            Dtype::U64 => "U64",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub dtype: Dtype,
    pub shape: Vec<u64>,
    /// `[begin, end)` relative to the start of the data region.
    pub data_offsets: [u64; 2],
}

impl TensorInfo {
    /// `product(shape) * width`, or `None` on overflow.
    pub fn expected_len(&self) -> Option<u64> {
        self.shape
            .iter()
            .try_fold(self.dtype.width(), |acc, &d| acc.checked_mul(d))
    }

    pub fn element_count(&self) -> Option<u64> {
        self.shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
    }

    pub fn byte_len(&self) -> u64 {
        self.data_offsets[1].saturating_sub(self.data_offsets[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetensorsHeader {
    pub tensors: BTreeMap<String, TensorInfo>,
    pub metadata: Option<BTreeMap<String, String>>,
    pub header_len: u64,
    /// Bytes following the header.
    pub data_len: u64,
}

impl SafetensorsHeader {
    /// Absolute file offset of the data region.
    pub fn data_start(&self) -> u64 {
        8 + self.header_len
    }

    /// Tensors ordered by name, with absolute file ranges.
    pub fn absolute_ranges(&self) -> impl Iterator<Item = (&str, &TensorInfo, u64, u64)> {
        let base = self.data_start();
        self.tensors.iter().map(move |(n, t)| {
            (
                n.as_str(),
                t,
                base + t.data_offsets[0],
                base + t.data_offsets[1],
            )
        })
    }

    /// Header JSON as it would be serialized back (tensors plus `__metadata__`).
    pub fn to_json_value(&self) -> Value {
        let mut obj = Map::new();
        if let Some(meta) = &self.metadata {
            obj.insert("__metadata__".into(), json!(meta));
        }
        for (name, t) in &self.tensors {
            obj.insert(
                name.clone(),
                serde_json::to_value(t).expect("tensor info serializes"),
            );
        }
        Value::Object(obj)
    }
}

fn malformed(reason: impl Into<String>) -> ScanError {
    ScanError::MalformedHeader(reason.into())
}

/// Reads and validates the header of a safetensors file. Findings carry the
/// file name as their path; callers relabel with a root-relative path.
pub fn parse_safetensors_header(
    path: &Path,
) -> Result<(SafetensorsHeader, Vec<Finding>), ScanError> {
    let mut file = File::open(path).map_err(|e| ScanError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| ScanError::io(path, e))?.len();
    let mut len_bytes = [0u8; 8];
    if file_len < 8 {
        return Err(malformed(format!(
            "file is {file_len} bytes, shorter than the 8-byte length prefix"
        )));
    }
    file.read_exact(&mut len_bytes)
        .map_err(|e| ScanError::io(path, e))?;
    let header_len = u64::from_le_bytes(len_bytes);
    check_header_len(header_len, file_len)?;
    let mut header = vec![0u8; header_len as usize];
    file.read_exact(&mut header)
        .map_err(|e| ScanError::io(path, e))?;
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_header_bytes(&header, file_len, &label)
}

fn check_header_len(header_len: u64, file_len: u64) -> Result<(), ScanError> {
    if header_len > MAX_HEADER_LEN {
        return Err(malformed(format!(
            "declared header length {header_len} exceeds the {MAX_HEADER_LEN}-byte limit"
        )));
    }
    if header_len > file_len - 8 {
        return Err(malformed(format!(
            "declared header length {header_len} exceeds the {} bytes after the length prefix",
            file_len - 8
        )));
    }
    if header_len < 2 {
        return Err(malformed(format!(
            "declared header length {header_len} cannot hold a JSON object"
        )));
    }
    Ok(())
}

/// Cheap sniff used by the inventory: does `head` start with a plausible
/// length prefix followed by a JSON object?
pub fn looks_like_safetensors(head: &[u8], file_len: u64) -> bool {
    if head.len() < 9 || file_len < 10 {
        return false;
    }
    let header_len = u64::from_le_bytes(head[..8].try_into().expect("8 bytes"));
    check_header_len(header_len, file_len).is_ok() && head[8] == b'{'
}

/// Parses header JSON given the total file length and validates every invariant.
pub fn parse_header_bytes(
    header: &[u8],
    file_len: u64,
    label: &str,
) -> Result<(SafetensorsHeader, Vec<Finding>), ScanError> {
    let header_len = header.len() as u64;
    let value: Value = serde_json::from_slice(header)
        .map_err(|e| malformed(format!("header is not JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(malformed("header is not a JSON object"));
    };
    let mut tensors = BTreeMap::new();
    let mut metadata = None;
    for (name, v) in obj {
        if name == "__metadata__" {
            let Value::Object(m) = v else {
                return Err(malformed("__metadata__ is not an object"));
            };
            let mut meta = BTreeMap::new();
            for (k, v) in m {
                match v {
                    Value::String(s) => {
                        meta.insert(k, s);
                    }
                    _ => {
                        return Err(malformed(format!(
                            "__metadata__ value for {k:?} is not a string"
                        )))
                    }
                }
            }
            metadata = Some(meta);
            continue;
        }
        tensors.insert(name.clone(), parse_tensor(&name, &v)?);
    }
    let parsed = SafetensorsHeader {
        tensors,
        metadata,
        header_len,
        data_len: file_len - 8 - header_len,
    };
    let findings = validate_header(&parsed, label);
    Ok((parsed, findings))
}

fn parse_tensor(name: &str, v: &Value) -> Result<TensorInfo, ScanError> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed(format!("tensor {name:?} is not an object")))?;
    let dtype_str = obj
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("tensor {name:?} has no dtype")))?;
    let dtype = Dtype::parse(dtype_str)
        .ok_or_else(|| malformed(format!("tensor {name:?} has unknown dtype {dtype_str:?}")))?;
    let shape = obj
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("tensor {name:?} has no shape")))?
        .iter()
        .map(|d| {
            d.as_u64()
                .ok_or_else(|| malformed(format!("tensor {name:?} has a non-integer dimension")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let offsets = obj
        .get("data_offsets")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .ok_or_else(|| malformed(format!("tensor {name:?} needs two data_offsets")))?;
    let begin = offsets[0]
        .as_u64()
        .ok_or_else(|| malformed(format!("tensor {name:?} has a bad begin offset")))?;
    let end = offsets[1]
        .as_u64()
        .ok_or_else(|| malformed(format!("tensor {name:?} has a bad end offset")))?;
    Ok(TensorInfo {
        dtype,
        shape,
        data_offsets: [begin, end],
    })
}

/// Checks offsets, lengths, overlap and contiguity. Each violation becomes a
/// Critical finding whose reason names the invariant.
pub fn validate_header(header: &SafetensorsHeader, label: &str) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut push = |id: &str, reason: String, evidence: Value| {
        findings.push(Finding::critical(id, THREAT, label, reason).with_evidence(evidence));
    };
    let mut regions: Vec<(u64, u64, &str)> = Vec::new();
    for (name, t) in &header.tensors {
        let [begin, end] = t.data_offsets;
        if begin > end {
            push(
                "safetensors.reversed_offsets",
                format!("reversed offsets: tensor {name} has begin {begin} > end {end}"),
                json!({"tensor": name, "data_offsets": [begin, end]}),
            );
            continue;
        }
        if end > header.data_len {
            push(
                "safetensors.out_of_bounds",
                format!(
                    "out of bounds: tensor {name} ends at {end}, data region is {} bytes",
                    header.data_len
                ),
                json!({"tensor": name, "data_offsets": [begin, end], "data_len": header.data_len}),
            );
        }
        match t.expected_len() {
            Some(n) if n == end - begin => {}
            expected => push(
                "safetensors.length_mismatch",
                format!(
                    "length mismatch: tensor {name} {} {:?} needs {} bytes, offsets span {}",
                    t.dtype,
                    t.shape,
                    expected.map_or("overflowing".to_string(), |n| n.to_string()),
                    end - begin
                ),
                json!({"tensor": name, "expected": expected, "actual": end - begin}),
            ),
        }
        regions.push((begin, end, name));
    }
    regions.sort();
    let mut cursor = 0u64;
    let mut prev: Option<&str> = None;
    for &(begin, end, name) in &regions {
        if begin < cursor {
            push(
                "safetensors.offset_overlap",
                format!(
                    "offset overlap: tensor {name} starts at {begin} inside {} (ends {cursor})",
                    prev.unwrap_or("?")
                ),
                json!({"tensor": name, "other": prev, "begin": begin, "previous_end": cursor}),
            );
        } else if begin > cursor {
            push(
                "safetensors.gap",
                format!(
                    "gap: {} unclaimed bytes before tensor {name} at {cursor}",
                    begin - cursor
                ),
                json!({"tensor": name, "gap_start": cursor, "gap_end": begin}),
            );
        }
        if end >= cursor {
            cursor = end;
            prev = Some(name);
        }
    }
    if cursor < header.data_len {
        push(
            "safetensors.trailing_bytes",
            format!(
                "gap: {} trailing bytes after the last tensor",
                header.data_len - cursor
            ),
            json!({"gap_start": cursor, "data_len": header.data_len}),
        );
    }
    findings
}

/// Serializes tensors into safetensors bytes, laying data out in the given
/// order. Used by fixtures and tests.
pub fn encode_safetensors(
    tensors: &[(&str, Dtype, Vec<u64>, Vec<u8>)],
    metadata: Option<&BTreeMap<String, String>>,
) -> Vec<u8> {
    let mut obj = Map::new();
    if let Some(meta) = metadata {
        obj.insert("__metadata__".into(), json!(meta));
    }
    let mut offset = 0u64;
    for (name, dtype, shape, bytes) in tensors {
        let end = offset + bytes.len() as u64;
        obj.insert(
            (*name).to_string(),
            json!({"dtype": dtype.name(), "shape": shape, "data_offsets": [offset, end]}),
        );
        offset = end;
    }
    let mut header = serde_json::to_vec(&Value::Object(obj)).expect("header serializes");
    while header.len() % 8 != 0 {
        header.push(b' ');
    }
    let mut out = Vec::with_capacity(8 + header.len() + offset as usize);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, _, _, bytes) in tensors {
        out.extend_from_slice(bytes);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_header(header: &str, data_len: usize) -> Vec<u8> {
        let mut out = (header.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(header.as_bytes());
        out.extend(std::iter::repeat_n(0u8, data_len));
        out
    }

    fn parse(bytes: &[u8]) -> Result<(SafetensorsHeader, Vec<Finding>), ScanError> {
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        check_header_len(header_len, bytes.len() as u64)?;
        parse_header_bytes(
            &bytes[8..8 + header_len as usize],
            bytes.len() as u64,
            "t.safetensors",
        )
    }

    fn ids(f: &[Finding]) -> Vec<&str> {
        f.iter().map(|f| f.id.as_str()).collect()
    }

    #[test]
    fn single_f32_tensor_is_clean() {
        let bytes = with_header(
            r#"{"t":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}}"#,
            8,
        );
        let (h, f) = parse(&bytes).unwrap();
        assert!(f.is_empty(), "{f:?}");
        assert_eq!(h.tensors["t"].dtype, Dtype::F32);
        assert_eq!(h.data_len, 8);
    }

    #[test]
    fn encoder_round_trips() {
        let mut meta = BTreeMap::new();
        meta.insert("format".to_string(), "pt".to_string());
        let bytes = encode_safetensors(
            &[
                ("a", Dtype::F16, vec![2, 2], vec![0; 8]),
                ("b", Dtype::I64, vec![1], vec![1; 8]),
            ],
            Some(&meta),
        );
        let (h, f) = parse(&bytes).unwrap();
        assert!(f.is_empty());
        assert_eq!(h.metadata.unwrap()["format"], "pt");
        assert_eq!(h.tensors["b"].data_offsets, [8, 16]);
        assert!(looks_like_safetensors(&bytes[..16], bytes.len() as u64));
    }

    #[test]
    fn overlap_is_named() {
        let bytes = with_header(
            r#"{"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]},"b":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}}"#,
            12,
        );
        let (_, f) = parse(&bytes).unwrap();
        assert!(ids(&f).contains(&"safetensors.offset_overlap"));
        assert!(f.iter().all(|f| f.is_critical()));
        assert!(f.iter().any(|f| f.reason.contains("offset overlap")));
    }

    #[test]
    fn gap_length_bounds_reversed_trailing() {
        let gap = with_header(
            r#"{"a":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}}"#,
            8,
        );
        assert_eq!(ids(&parse(&gap).unwrap().1), ["safetensors.gap"]);

        let len = with_header(
            r#"{"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}}"#,
            8,
        );
        assert_eq!(
            ids(&parse(&len).unwrap().1),
            ["safetensors.length_mismatch"]
        );

        let oob = with_header(
            r#"{"a":{"dtype":"U8","shape":[16],"data_offsets":[0,16]}}"#,
            8,
        );
        assert_eq!(ids(&parse(&oob).unwrap().1), ["safetensors.out_of_bounds"]);

        let rev = with_header(
            r#"{"a":{"dtype":"U8","shape":[0],"data_offsets":[8,0]}}"#,
            8,
        );
        assert!(ids(&parse(&rev).unwrap().1).contains(&"safetensors.reversed_offsets"));

        let trailing = with_header(
            r#"{"a":{"dtype":"U8","shape":[4],"data_offsets":[0,4]}}"#,
            8,
        );
        assert_eq!(
            ids(&parse(&trailing).unwrap().1),
            ["safetensors.trailing_bytes"]
        );

        let overflow = with_header(
            r#"{"a":{"dtype":"F64","shape":[4294967296,4294967296],"data_offsets":[0,8]}}"#,
            8,
        );
        assert_eq!(
            ids(&parse(&overflow).unwrap().1),
            ["safetensors.length_mismatch"]
        );
    }

    #[test]
    fn empty_tensor_is_fine() {
        let bytes = with_header(
            r#"{"e":{"dtype":"F32","shape":[0],"data_offsets":[0,0]},"t":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}}"#,
            4,
        );
        assert!(parse(&bytes).unwrap().1.is_empty());
    }

    #[test]
    fn absurd_header_lengths_are_malformed() {
        let mut bytes = with_header(r#"{}"#, 0);
        let doubled = (bytes.len() as u64) * 2;
        bytes[..8].copy_from_slice(&doubled.to_le_bytes());
        assert!(matches!(parse(&bytes), Err(ScanError::MalformedHeader(_))));
        assert!(check_header_len(MAX_HEADER_LEN + 1, u64::MAX).is_err());
    }

    #[test]
    fn structural_json_errors_are_malformed() {
        for h in [
            "[1,2]  ",
            r#"{"a":{"dtype":"Q4","shape":[1],"data_offsets":[0,1]}}"#,
            r#"{"a":{"dtype":"U8","shape":[-1],"data_offsets":[0,1]}}"#,
            r#"{"a":{"dtype":"U8","shape":[1],"data_offsets":[0]}}"#,
            r#"{"__metadata__":{"k":1}}"#,
            "not json",
        ] {
            assert!(
                matches!(
                    parse(&with_header(h, 1)),
                    Err(ScanError::MalformedHeader(_))
                ),
                "{h}"
            );
        }
    }
}
