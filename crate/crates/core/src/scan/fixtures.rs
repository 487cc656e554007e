//! Synthetic model directories for demos and tests. Every byte is generated
//! here; nothing is downloaded and no pickle is ever executed.
//!
//! * `guard`: one clean safetensors shard, a PyTorch zip whose pickle imports
//!   `os.system`, and a safetensors file with one flipped byte relative to the
//!   shipped manifest. Expected guard outcomes are Pass, Blocked and Fail.
//! * `clean`: a small model with config, tokenizer, disclosure file and a
//!   matching manifest. Scans with exit code 0.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;
use zip::write::SimpleFileOptions;

use super::{scan_filter, PipelineError};
use crate::integrity::build_manifest;
use crate::packaging::safetensors::encode_safetensors;
use crate::packaging::Dtype;

pub const MANIFEST_NAME: &str = "model.manifest.json";
pub const CLEAN_SHARD: &str = "model-00001-of-00002.safetensors";
pub const UNSAFE_PT: &str = "unsafe.pt";
pub const MUTANT: &str = "model_mutant.safetensors";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureCase {
    Guard,
    Clean,
    /// Every case, each in a subdirectory named after it.
    All,
}

impl FromStr for FixtureCase {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "guard" => Ok(FixtureCase::Guard),
            "clean" => Ok(FixtureCase::Clean),
            "all" => Ok(FixtureCase::All),
            other => Err(format!(
                "unknown fixture {other:?} (expected guard, clean or all)"
            )),
        }
    }
}

impl fmt::Display for FixtureCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixtureCase::Guard => "guard",
            FixtureCase::Clean => "clean",
            FixtureCase::All => "all",
        })
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

fn write(dir: &Path, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, PipelineError> {
    let path = dir.join(rel);
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(path)
}

/// Little-endian f32 bytes of a deterministic ramp starting at `start`.
fn ramp(n: usize, start: f32) -> Vec<u8> {
    (0..n)
        .flat_map(|i| (start + i as f32 * 0.01).to_le_bytes())
        .collect()
}

/// Embedding and LM head for a model with hidden size 8 and vocabulary 16.
pub fn tiny_weights(start: f32) -> Vec<u8> {
    encode_safetensors(
        &[
            (
                "model.embed_tokens.weight",
                Dtype::F32,
                vec![16, 8],
                ramp(128, start),
            ),
            ("lm_head.weight", Dtype::F32, vec![16, 8], ramp(128, -start)),
        ],
        None,
    )
}

/// A PyTorch-style zip archive whose pickle calls `os.system("echo airscan")`
/// through GLOBAL and REDUCE.
pub fn malicious_pt() -> Vec<u8> {
    let arg = b"echo airscan";
    let mut pickle = b"\x80\x02cos\nsystem\nX".to_vec();
    pickle.extend_from_slice(&(arg.len() as u32).to_le_bytes());
    pickle.extend_from_slice(arg);
    pickle.extend_from_slice(b"\x85R.");

    let mut zw = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    let opts = SimpleFileOptions::default().compression_method(zip::CompressionMethod::Stored);
    zw.start_file("archive/data.pkl", opts)
        .expect("in-memory zip");
    zw.write_all(&pickle).expect("in-memory zip");
    zw.start_file("archive/version", opts)
        .expect("in-memory zip");
    zw.write_all(b"3\n").expect("in-memory zip");
    zw.finish().expect("in-memory zip").into_inner()
}

fn write_manifest(dir: &Path) -> Result<PathBuf, PipelineError> {
    let manifest =
        build_manifest(dir, &scan_filter).map_err(|e| PipelineError::Io(e.to_string()))?;
    write(dir, MANIFEST_NAME, manifest.to_json())
}

fn make_guard(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = vec![
        write(dir, CLEAN_SHARD, tiny_weights(0.0))?,
        write(dir, UNSAFE_PT, malicious_pt())?,
    ];
    let mutant = tiny_weights(1.0);
    out.push(write(dir, MUTANT, &mutant)?);
    out.push(write_manifest(dir)?);

    // Flip the low mantissa bit of the first float: still finite, still well formed.
    let header_len = u64::from_le_bytes(mutant[..8].try_into().expect("8 bytes")) as usize;
    let mut flipped = mutant;
    flipped[8 + header_len] ^= 0x01;
    write(dir, MUTANT, flipped)?;
    Ok(out)
}

fn make_clean(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let pretty = |v: serde_json::Value| serde_json::to_vec_pretty(&v).expect("serializes");
    let mut out = vec![
        write(dir, "model.safetensors", tiny_weights(0.5))?,
        write(
            dir,
            "config.json",
            pretty(
                json!({"model_type": "llama", "hidden_size": 8, "vocab_size": 16, "num_hidden_layers": 1, "torch_dtype": "float32"}),
            ),
        )?,
        write(
            dir,
            "tokenizer.json",
            pretty(
                json!({"model": {"type": "BPE", "vocab": {"a": 0, "b": 1, "ab": 2}, "merges": ["a b"]}}),
            ),
        )?,
        write(
            dir,
            "tokenizer_config.json",
            pretty(
                json!({"chat_template": "{% for m in messages %}{{ m['role'] }}: {{ m['content'] }}\n{% endfor %}"}),
            ),
        )?,
        write(
            dir,
            super::DISCLOSURE_FILE,
            pretty(json!({
                "model_name": "tiny-clean",
                "model_id": "airscan-fixtures/tiny-clean",
                "version_or_commit": "1.0.0",
                "license": "Apache-2.0",
                "publisher_evidence": {"organization": "airscan fixtures", "statement": "synthetic weights generated locally"},
                "base_model": "none (trained from scratch)",
                "sources": {"license": "https://www.apache.org/licenses/LICENSE-2.0"},
                "undisclosed": [
                    "signature_bundle", "adapters_lora", "detector_method", "detector_outputs",
                    "backdoor_probe_results", "benchmark_summary", "eval_datasets", "metrics"
                ]
            })),
        )?,
    ];
    out.push(write_manifest(dir)?);
    Ok(out)
}

/// Writes the fixture into `out_dir` (created if needed) and returns the files written.
pub fn make_fixture(case: FixtureCase, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    match case {
        FixtureCase::Guard => make_guard(out_dir),
        FixtureCase::Clean => make_clean(out_dir),
        FixtureCase::All => {
            let mut out = Vec::new();
            for c in [FixtureCase::Guard, FixtureCase::Clean] {
                out.extend(make_fixture(c, &out_dir.join(c.to_string()))?);
            }
            Ok(out)
        }
    }
}
