//! Evidence-producing scanner for LLM model directories.
//!
//! The crate is organized by concern: [`evidence`] holds the field schema and
//! artifact format, [`integrity`] the hashing and fingerprinting, [`packaging`]
//! the serializer and loader checks, [`structure`] the weights and adapter
//! analysis, [`probes`] the probe-log metrics, [`export`] the SBOM-shaped
//! documents and [`scan`] the end-to-end pipeline.

pub mod canonical;
pub mod evidence;
pub mod export;
pub mod integrity;
pub mod packaging;
pub mod probes;
pub mod scan;
pub mod structure;
