//! Structural analysis of weights and adapters: config-vs-shape consistency,
//! per-tensor statistics and checksums, adapter inventory.

mod adapters;
mod checksums;
mod shape;
mod stats;

use std::io;
use std::path::Path;

use thiserror::Error;

use crate::integrity::IntegrityError;

pub use adapters::{
    adapter_inventory, adapter_inventory_listed, parse_declared_adapters, AdapterKind,
    AdapterRecord, DeclaredAdapter,
};
pub use checksums::tensor_checksums;
pub use shape::{
    shape_consistency, shape_consistency_with, DimensionRule, ShapeCheck, ShapePatterns,
    ShapeReport, ShapeVerdict, DEFAULT_SHAPE_PATTERNS_JSON,
};
pub use stats::{
    decode_values, stats_for_tensor, tensor_stats, Accumulator, OutlierMethod, StatsSettings,
    StatsStatus, TensorStats,
};

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("dtype {0} is not supported for statistics")]
    DtypeUnsupported(String),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("invalid shape pattern table: {0}")]
    Patterns(String),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

impl StructureError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        StructureError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
