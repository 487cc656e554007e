//! ONNX operator extraction over the raw protobuf wire format.
//!
//! Only the handful of message fields leading to nodes are decoded; everything
//! else (initializers, raw tensor data) is skipped by seeking, so memory use is
//! independent of model size.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufReader, Read, Seek};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::finding::Finding;
use super::policy::PolicyConfig;
use super::ScanError;

const THREAT_CUSTOM_OP: &str = "2.3";
const MAX_DEPTH: usize = 32;
/// Strings longer than this are skipped rather than decoded.
const MAX_STRING: u64 = 4096;

/// Operator domains treated as standard.
pub const STANDARD_DOMAINS: [&str; 4] = ["", "ai.onnx", "ai.onnx.ml", "ai.onnx.preview.training"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Msg {
    Model,
    Graph,
    Function,
    Node,
    Attribute,
    Tensor,
    StringEntry,
    OpsetId,
}

/// Field numbers worth descending into, per message type.
fn child(msg: Msg, field: u64) -> Option<Msg> {
    match (msg, field) {
        (Msg::Model, 7) => Some(Msg::Graph),
        (Msg::Model, 25) => Some(Msg::Function),
        (Msg::Model, 8) => Some(Msg::OpsetId),
        (Msg::Graph, 1) => Some(Msg::Node),
        (Msg::Graph, 5) => Some(Msg::Tensor),
        (Msg::Function, 7) => Some(Msg::Node),
        (Msg::Node, 5) => Some(Msg::Attribute),
        (Msg::Attribute, 6) | (Msg::Attribute, 11) => Some(Msg::Graph),
        (Msg::Tensor, 13) => Some(Msg::StringEntry),
        _ => None,
    }
}

/// String fields captured, per message type.
fn wants_string(msg: Msg, field: u64) -> bool {
    matches!(
        (msg, field),
        (Msg::Node, 4)
            | (Msg::Node, 7)
            | (Msg::Tensor, 8)
            | (Msg::StringEntry, 1)
            | (Msg::StringEntry, 2)
            | (Msg::OpsetId, 1)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct OnnxOperator {
    pub domain: String,
    pub op_type: String,
    pub count: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OnnxScan {
    pub operators: Vec<OnnxOperator>,
    pub opset_domains: Vec<String>,
    /// Initializers stored outside the model file, by tensor name.
    pub external_data: BTreeMap<String, String>,
}

impl OnnxScan {
    /// Distinct operator names, qualified as `domain::op` outside the default domain.
    pub fn op_names(&self) -> Vec<String> {
        self.operators
            .iter()
            .map(|o| {
                if o.domain.is_empty() || o.domain == "ai.onnx" {
                    o.op_type.clone()
                } else {
                    format!("{}::{}", o.domain, o.op_type)
                }
            })
            .collect()
    }
}

#[derive(Default)]
struct Collected {
    ops: BTreeMap<(String, String), u64>,
    opset_domains: BTreeSet<String>,
    external: BTreeMap<String, String>,
}

struct Walker<R> {
    r: R,
    pos: u64,
}

impl<R: Read + Seek> Walker<R> {
    fn byte(&mut self) -> Result<u8, ScanError> {
        let mut b = [0u8; 1];
        self.r
            .read_exact(&mut b)
            .map_err(|_| ScanError::MalformedProtobuf(self.pos))?;
        self.pos += 1;
        Ok(b[0])
    }

    fn varint(&mut self) -> Result<u64, ScanError> {
        let start = self.pos;
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(ScanError::MalformedProtobuf(start))
    }

    fn skip(&mut self, n: u64) -> Result<(), ScanError> {
        let n_i64 = i64::try_from(n).map_err(|_| ScanError::MalformedProtobuf(self.pos))?;
        self.r
            .seek_relative(n_i64)
            .map_err(|_| ScanError::MalformedProtobuf(self.pos))?;
        self.pos += n;
        Ok(())
    }

    fn read_string(&mut self, n: u64) -> Result<String, ScanError> {
        let mut buf = vec![0u8; n as usize];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| ScanError::MalformedProtobuf(self.pos))?;
        self.pos += n;
        Ok(String::from_utf8_lossy(&buf).into_owned())
    }

    /// Walks one message occupying `[self.pos, end)`.
    fn message(
        &mut self,
        msg: Msg,
        end: u64,
        depth: usize,
        out: &mut Collected,
    ) -> Result<(), ScanError> {
        if depth > MAX_DEPTH {
            return Err(ScanError::MalformedProtobuf(self.pos));
        }
        let mut strings: Vec<(u64, String)> = Vec::new();
        while self.pos < end {
            let tag_at = self.pos;
            let tag = self.varint()?;
            let (field, wire) = (tag >> 3, tag & 7);
            if field == 0 {
                return Err(ScanError::MalformedProtobuf(tag_at));
            }
            match wire {
                0 => {
                    self.varint()?;
                }
                1 => self.skip(8)?,
                5 => self.skip(4)?,
                2 => {
                    let len = self.varint()?;
                    let body_end = self
                        .pos
                        .checked_add(len)
                        .filter(|&e| e <= end)
                        .ok_or(ScanError::MalformedProtobuf(tag_at))?;
                    if let Some(sub) = child(msg, field) {
                        self.message(sub, body_end, depth + 1, out)?;
                    } else if wants_string(msg, field) && len <= MAX_STRING {
                        strings.push((field, self.read_string(len)?));
                    } else {
                        self.skip(len)?;
                    }
                }
                _ => return Err(ScanError::MalformedProtobuf(tag_at)),
            }
            if self.pos > end {
                return Err(ScanError::MalformedProtobuf(tag_at));
            }
        }
        let get = |f: u64| {
            strings
                .iter()
                .rev()
                .find(|(n, _)| *n == f)
                .map(|(_, s)| s.clone())
        };
        match msg {
            Msg::Node => {
                let op = get(4).unwrap_or_default();
                let domain = get(7).unwrap_or_default();
                *out.ops.entry((domain, op)).or_default() += 1;
            }
            Msg::OpsetId => {
                out.opset_domains.insert(get(1).unwrap_or_default());
            }
            Msg::StringEntry => {
                if get(1).as_deref() == Some("location") {
                    if let Some(loc) = get(2) {
                        out.external.insert(String::new(), loc);
                    }
                }
            }
            Msg::Tensor => {
                if let Some(loc) = out.external.remove("") {
                    out.external.insert(get(8).unwrap_or_default(), loc);
                }
            }
            _ => {}
        }
        Ok(())
    }
}

fn walk<R: Read + Seek>(reader: R, len: u64) -> Result<Collected, ScanError> {
    if len == 0 {
        return Err(ScanError::MalformedProtobuf(0));
    }
    let mut w = Walker { r: reader, pos: 0 };
    let mut out = Collected::default();
    w.message(Msg::Model, len, 0, &mut out)?;
    Ok(out)
}

/// Extracts the operators of every graph, subgraph and function in an ONNX
/// model and flags those outside the policy allowlist or in custom domains.
pub fn scan_onnx_ops(
    path: &Path,
    policy: &PolicyConfig,
) -> Result<(OnnxScan, Vec<Finding>), ScanError> {
    let file = File::open(path).map_err(|e| ScanError::io(path, e))?;
    let len = file.metadata().map_err(|e| ScanError::io(path, e))?.len();
    let label = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    scan_onnx_reader(BufReader::new(file), len, policy, &label)
}

pub fn scan_onnx_bytes(
    bytes: &[u8],
    policy: &PolicyConfig,
    label: &str,
) -> Result<(OnnxScan, Vec<Finding>), ScanError> {
    scan_onnx_reader(io::Cursor::new(bytes), bytes.len() as u64, policy, label)
}

fn scan_onnx_reader<R: Read + Seek>(
    reader: R,
    len: u64,
    policy: &PolicyConfig,
    label: &str,
) -> Result<(OnnxScan, Vec<Finding>), ScanError> {
    let collected = walk(reader, len)?;
    let mut findings = Vec::new();
    let operators: Vec<OnnxOperator> = collected
        .ops
        .into_iter()
        .map(|((domain, op_type), count)| OnnxOperator {
            domain,
            op_type,
            count,
        })
        .collect();
    for op in &operators {
        let evidence = json!({"op_type": op.op_type, "domain": op.domain, "count": op.count});
        if !STANDARD_DOMAINS.contains(&op.domain.as_str()) {
            findings.push(
                Finding::critical(
                    "onnx.custom_domain_op",
                    THREAT_CUSTOM_OP,
                    label,
                    format!("operator {} from custom domain {:?}", op.op_type, op.domain),
                )
                .with_evidence(evidence),
            );
        } else if !policy.allowed_onnx_ops.contains(&op.op_type) {
            findings.push(
                Finding::critical(
                    "onnx.op_not_allowed",
                    THREAT_CUSTOM_OP,
                    label,
                    format!(
                        "operator {} is not in the ONNX operator allowlist",
                        op.op_type
                    ),
                )
                .with_evidence(evidence),
            );
        }
    }
    for (tensor, location) in &collected.external {
        if location.starts_with('/') || location.contains("..") || location.contains(':') {
            findings.push(
                Finding::warn(
                    "onnx.external_data_escape",
                    Some(THREAT_CUSTOM_OP),
                    label,
                    format!("initializer {tensor} loads external data from {location:?} outside the model directory"),
                )
                .with_evidence(json!({"tensor": tensor, "location": location})),
            );
        }
    }
    if operators.is_empty() {
        findings.push(Finding::info(
            "onnx.no_nodes",
            None,
            label,
            "no graph nodes found",
        ));
    }
    let scan = OnnxScan {
        operators,
        opset_domains: collected.opset_domains.into_iter().collect(),
        external_data: collected.external,
    };
    Ok((scan, findings))
}
