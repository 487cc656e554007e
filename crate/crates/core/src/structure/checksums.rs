use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use rayon::prelude::*;

use super::StructureError;
use crate::integrity::hash_reader;
use crate::packaging::SafetensorsHeader;

/// SHA-256 of each tensor's exact byte region, keyed by tensor name. Only the
/// bytes matter, so a tensor moved to another offset or file keeps its digest.
pub fn tensor_checksums(
    path: &Path,
    header: &SafetensorsHeader,
) -> Result<BTreeMap<String, String>, StructureError> {
    header
        .absolute_ranges()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(name, _, start, end)| {
            let io = |e| StructureError::io(path, e);
            let mut file = File::open(path).map_err(io)?;
            file.seek(SeekFrom::Start(start)).map_err(io)?;
            let digest = hash_reader(file.take(end.saturating_sub(start))).map_err(io)?;
            Ok((name.to_string(), digest))
        })
        .collect()
}
