//! Static packaging and serialization safety: file inventory, pickle opcode
//! disassembly, safetensors header validation, GGUF metadata scanning, ONNX
//! operator extraction and the load-time guard.

mod finding;
pub mod gguf;
pub mod guard;
pub mod inventory;
pub mod onnx;
pub mod pickle;
mod policy;
pub mod safetensors;

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::integrity::IntegrityError;

pub use finding::{Finding, Locus, Severity};
pub use gguf::{scan_gguf_metadata, GgufMetadata, GgufValue};
pub use guard::{
    enforce_loader_policy, ArtifactDetail, ArtifactScan, GuardOutcome, GuardResult, GuardRule,
    IntegrityStatus,
};
pub use inventory::{inventory_files, DetectedKind, FileInventory, InventoryEntry};
pub use onnx::{scan_onnx_ops, OnnxOperator, OnnxScan};
pub use pickle::{scan_pickle_container, scan_pickle_stream};
pub use policy::{
    extension_of, PolicyConfig, SerializationFormat, TemplateMatcher, TensorStatsSettings,
    DEFAULT_POLICY_JSON,
};
pub use safetensors::{parse_safetensors_header, Dtype, SafetensorsHeader, TensorInfo};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("pickle stream truncated at offset {0}")]
    TruncatedStream(u64),
    #[error("not a pickle stream")]
    NotAPickle,
    #[error("corrupt zip container: {0}")]
    CorruptZip(String),
    #[error("malformed safetensors header: {0}")]
    MalformedHeader(String),
    #[error("not a GGUF file")]
    NotGguf,
    #[error("unsupported GGUF version {0}")]
    UnsupportedGgufVersion(u32),
    #[error("GGUF metadata truncated at offset {0}")]
    TruncatedMetadata(u64),
    #[error("malformed protobuf at offset {0}")]
    MalformedProtobuf(u64),
    #[error("in member {member}: {source}")]
    InMember {
        member: String,
        #[source]
        source: Box<ScanError>,
    },
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

impl ScanError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        ScanError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn in_member(self, member: &str) -> Self {
        ScanError::InMember {
            member: member.to_string(),
            source: Box::new(self),
        }
    }
}
