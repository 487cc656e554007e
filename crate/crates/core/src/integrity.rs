//! Release-integrity evidence: streamed file hashing, hash manifests, directory
//! Merkle roots and config/tokenizer fingerprints.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::canonical::{is_hex_digest, to_canonical_bytes};

pub const MERKLE_CONSTRUCTION_ID: &str = "airs-merkle-v1";

const HASH_CHUNK: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("symlink {0} points outside the scanned root")]
    SymlinkEscape(String),
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("no tokenizer vocab or merges file found")]
    NoTokenizerFound,
    #[error("path {0} is not valid UTF-8")]
    NonUtf8Path(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IntegrityError + '_ {
    move |source| IntegrityError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// SHA-256 of a file, read in fixed-size chunks.
pub fn hash_file(path: &Path) -> Result<String, IntegrityError> {
    let file = File::open(path).map_err(io_err(path))?;
    hash_reader(file).map_err(io_err(path))
}

pub fn hash_reader<R: Read>(mut reader: R) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; HASH_CHUNK];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(rename = "path")]
    pub relative_path: String,
    #[serde(rename = "size")]
    pub size_bytes: u64,
    pub sha256: String,
}

/// Per-file digests, unique and sorted by path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashManifest {
    entries: Vec<ManifestEntry>,
    pub root_dir: String,
}

impl HashManifest {
    pub fn from_entries(
        mut entries: Vec<ManifestEntry>,
        root_dir: impl Into<String>,
    ) -> Result<Self, IntegrityError> {
        entries.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
        for pair in entries.windows(2) {
            if pair[0].relative_path == pair[1].relative_path {
                return Err(IntegrityError::InvalidManifest(format!(
                    "duplicate path {}",
                    pair[0].relative_path
                )));
            }
        }
        if let Some(bad) = entries.iter().find(|e| !is_hex_digest(&e.sha256)) {
            return Err(IntegrityError::InvalidManifest(format!(
                "digest for {} is not 64 lowercase hex characters",
                bad.relative_path
            )));
        }
        Ok(HashManifest {
            entries,
            root_dir: root_dir.into(),
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&ManifestEntry> {
        self.entries
            .binary_search_by(|e| e.relative_path.as_str().cmp(path))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// The `.manifest.json` file form: a JSON array of `{path, size, sha256}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("manifest serializes")
    }

    pub fn from_json(bytes: &[u8], root_dir: impl Into<String>) -> Result<Self, IntegrityError> {
        let entries: Vec<ManifestEntry> = serde_json::from_slice(bytes)
            .map_err(|e| IntegrityError::InvalidManifest(e.to_string()))?;
        Self::from_entries(entries, root_dir)
    }

    pub fn load(path: &Path) -> Result<Self, IntegrityError> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_json(&bytes, path.display().to_string())
    }
}

/// Excludes manifests and evidence artifacts, which describe a directory rather
/// than belong to it.
pub fn default_manifest_filter(rel: &str) -> bool {
    !(rel.ends_with(".manifest.json") || rel.ends_with(".airs.json"))
}

/// A regular file found under a scan root. Symlinks that resolve to files inside
/// the root are listed with their resolved target.
#[derive(Debug, Clone)]
pub struct RootFile {
    pub relative_path: String,
    pub resolved: PathBuf,
    pub size_bytes: u64,
    pub via_symlink: bool,
}

/// Lists regular files under `root` in path order. Symlinks are never followed
/// outside the root; directory symlinks are not descended.
pub fn list_files(
    root: &Path,
    include: &dyn Fn(&str) -> bool,
) -> Result<Vec<RootFile>, IntegrityError> {
    let canon_root = fs::canonicalize(root).map_err(io_err(root))?;
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(false).min_depth(1) {
        let entry = entry.map_err(|e| {
            let path = e
                .path()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            IntegrityError::Io {
                path,
                source: e.into(),
            }
        })?;
        let rel = relative_posix(root, entry.path())?;
        let ft = entry.file_type();
        if ft.is_dir() {
            continue;
        }
        if ft.is_symlink() {
            let target = fs::canonicalize(entry.path()).map_err(io_err(entry.path()))?;
            if !target.starts_with(&canon_root) {
                return Err(IntegrityError::SymlinkEscape(rel));
            }
            let meta = fs::metadata(&target).map_err(io_err(&target))?;
            if meta.is_file() && include(&rel) {
                out.push(RootFile {
                    relative_path: rel,
                    resolved: target,
                    size_bytes: meta.len(),
                    via_symlink: true,
                });
            }
            continue;
        }
        if ft.is_file() && include(&rel) {
            let meta = entry.metadata().map_err(|e| IntegrityError::Io {
                path: rel.clone(),
                source: e.into(),
            })?;
            out.push(RootFile {
                relative_path: rel,
                resolved: entry.path().to_path_buf(),
                size_bytes: meta.len(),
                via_symlink: false,
            });
        }
    }
    out.sort_by(|a, b| a.relative_path.cmp(&b.relative_path));
    Ok(out)
}

fn relative_posix(root: &Path, path: &Path) -> Result<String, IntegrityError> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let mut parts = Vec::new();
    for c in rel.components() {
        let s = c
            .as_os_str()
            .to_str()
            .ok_or_else(|| IntegrityError::NonUtf8Path(path.display().to_string()))?;
        parts.push(s);
    }
    Ok(parts.join("/"))
}

pub fn build_manifest(
    dir: &Path,
    include: &(dyn Fn(&str) -> bool + Sync),
) -> Result<HashManifest, IntegrityError> {
    let files = list_files(dir, include)?;
    let entries = files
        .par_iter()
        .map(|f| {
            Ok(ManifestEntry {
                relative_path: f.relative_path.clone(),
                size_bytes: f.size_bytes,
                sha256: hash_file(&f.resolved)?,
            })
        })
        .collect::<Result<Vec<_>, IntegrityError>>()?;
    HashManifest::from_entries(entries, dir.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyVerdict {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestMismatch {
    pub path: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub matched: Vec<String>,
    pub mismatched: Vec<DigestMismatch>,
    pub missing: Vec<String>,
    pub extra: Vec<String>,
    pub verdict: VerifyVerdict,
}

impl VerifyReport {
    pub fn is_match(&self) -> bool {
        self.verdict == VerifyVerdict::Match
    }

    pub fn mismatch_for(&self, path: &str) -> Option<&DigestMismatch> {
        self.mismatched.iter().find(|m| m.path == path)
    }
}

pub fn verify_manifest(
    dir: &Path,
    manifest: &HashManifest,
) -> Result<VerifyReport, IntegrityError> {
    verify_manifest_with(dir, manifest, &default_manifest_filter)
}

pub fn verify_manifest_with(
    dir: &Path,
    manifest: &HashManifest,
    include: &(dyn Fn(&str) -> bool + Sync),
) -> Result<VerifyReport, IntegrityError> {
    let current = build_manifest(dir, include)?;
    Ok(compare_manifests(manifest, &current))
}

/// Classifies every path of `expected` and `actual` into matched/mismatched/missing/extra.
pub fn compare_manifests(expected: &HashManifest, actual: &HashManifest) -> VerifyReport {
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    for e in expected.entries() {
        match actual.get(&e.relative_path) {
            Some(a) if a.sha256 == e.sha256 && a.size_bytes == e.size_bytes => {
                matched.push(e.relative_path.clone())
            }
            Some(a) => mismatched.push(DigestMismatch {
                path: e.relative_path.clone(),
                expected: e.sha256.clone(),
                actual: a.sha256.clone(),
            }),
            None => missing.push(e.relative_path.clone()),
        }
    }
    let extra: Vec<String> = actual
        .entries()
        .iter()
        .filter(|a| expected.get(&a.relative_path).is_none())
        .map(|a| a.relative_path.clone())
        .collect();
    let verdict = if mismatched.is_empty() && missing.is_empty() && extra.is_empty() {
        VerifyVerdict::Match
    } else {
        VerifyVerdict::Mismatch
    };
    VerifyReport {
        matched,
        mismatched,
        missing,
        extra,
        verdict,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleRoot {
    pub root: String,
    pub leaf_count: usize,
    pub construction_id: String,
}

/// leaf = H(path ‖ 0x00 ‖ digest), node = H(left ‖ right), an odd trailing node
/// is promoted unchanged to the next level.
pub fn merkle_root(manifest: &HashManifest) -> Result<MerkleRoot, IntegrityError> {
    if manifest.is_empty() {
        return Err(IntegrityError::EmptyManifest);
    }
    let mut level: Vec<[u8; 32]> = manifest.entries().iter().map(merkle_leaf).collect();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => {
                    let mut h = Sha256::new();
                    h.update(l);
                    h.update(r);
                    h.finalize().into()
                }
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
    }
    Ok(MerkleRoot {
        root: hex::encode(level[0]),
        leaf_count: manifest.len(),
        construction_id: MERKLE_CONSTRUCTION_ID.to_string(),
    })
}

fn merkle_leaf(entry: &ManifestEntry) -> [u8; 32] {
    let digest = hex::decode(&entry.sha256).expect("manifest digests are validated hex");
    let mut h = Sha256::new();
    h.update(entry.relative_path.as_bytes());
    h.update([0u8]);
    h.update(&digest);
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerprintKind {
    Config,
    TokenizerVocab,
    TokenizerMerges,
    Family,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub kind: FingerprintKind,
    pub sha256: String,
    pub source_files: Vec<String>,
}

/// Digest accumulator: each part contributes u64-LE(len(label)) ‖ label ‖ u64-LE(len(body)) ‖ body.
#[derive(Default)]
struct FramedDigest {
    hasher: Sha256,
}

impl FramedDigest {
    fn part(&mut self, label: &str, body: &[u8]) {
        self.hasher.update((label.len() as u64).to_le_bytes());
        self.hasher.update(label.as_bytes());
        self.hasher.update((body.len() as u64).to_le_bytes());
        self.hasher.update(body);
    }

    fn finish(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

fn read_json(root: &Path, rel: &str) -> Result<serde_json::Value, IntegrityError> {
    let path = root.join(rel);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    serde_json::from_slice(&bytes).map_err(|e| IntegrityError::Parse {
        path: rel.to_string(),
        reason: e.to_string(),
    })
}

fn is_json(rel: &str) -> bool {
    rel.to_ascii_lowercase().ends_with(".json")
}

/// Canonical bytes of a file: canonical JSON for `.json` files, raw bytes otherwise.
fn canonical_content(root: &Path, rel: &str) -> Result<Vec<u8>, IntegrityError> {
    if is_json(rel) {
        Ok(to_canonical_bytes(&read_json(root, rel)?))
    } else {
        let path = root.join(rel);
        fs::read(&path).map_err(io_err(&path))
    }
}

/// Fingerprint over config files given as paths relative to `root`, taken in
/// sorted path order. JSON content is canonicalized first.
pub fn fingerprint_config(
    root: &Path,
    config_files: &[String],
) -> Result<Fingerprint, IntegrityError> {
    let files: BTreeSet<&String> = config_files.iter().collect();
    if files.is_empty() {
        return Err(IntegrityError::InvalidManifest(
            "no config files to fingerprint".into(),
        ));
    }
    let mut digest = FramedDigest::default();
    for rel in &files {
        digest.part(rel, &canonical_content(root, rel)?);
    }
    Ok(Fingerprint {
        kind: FingerprintKind::Config,
        sha256: digest.finish(),
        source_files: files.into_iter().cloned().collect(),
    })
}

/// Family fingerprint: the config fingerprint under the `Family` kind, so it can be
/// looked up in an operator-maintained registry.
pub fn fingerprint_family(
    root: &Path,
    config_files: &[String],
) -> Result<Fingerprint, IntegrityError> {
    let mut fp = fingerprint_config(root, config_files)?;
    fp.kind = FingerprintKind::Family;
    Ok(fp)
}

/// Operator-supplied map of family name to known family fingerprints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRegistry {
    pub families: BTreeMap<String, Vec<String>>,
}

impl FamilyRegistry {
    pub fn lookup(&self, digest: &str) -> Option<&str> {
        self.families
            .iter()
            .find(|(_, ds)| ds.iter().any(|d| d == digest))
            .map(|(name, _)| name.as_str())
    }
}

/// Recognized config files, by file name.
pub fn is_config_file(rel: &str) -> bool {
    let name = rel.rsplit('/').next().unwrap_or(rel);
    matches!(
        name,
        "config.json" | "generation_config.json" | "model_index.json" | "preprocessor_config.json"
    )
}

fn tokenizer_role(rel: &str) -> Option<FingerprintKind> {
    let name = rel.rsplit('/').next().unwrap_or(rel);
    match name {
        "merges.txt" => Some(FingerprintKind::TokenizerMerges),
        "vocab.json"
        | "vocab.txt"
        | "tokenizer.model"
        | "spiece.model"
        | "sentencepiece.bpe.model" => Some(FingerprintKind::TokenizerVocab),
        _ if name.ends_with(".tiktoken") => Some(FingerprintKind::TokenizerVocab),
        _ => None,
    }
}

pub fn is_tokenizer_file(rel: &str) -> bool {
    rel.rsplit('/').next() == Some("tokenizer.json") || tokenizer_role(rel).is_some()
}

/// One fingerprint per tokenizer role (vocab, merges). A combined `tokenizer.json`
/// contributes its vocab plus added tokens to the vocab digest and its merge list
/// to the merges digest.
pub fn fingerprint_tokenizer(
    root: &Path,
    tokenizer_files: &[String],
) -> Result<Vec<Fingerprint>, IntegrityError> {
    let files: BTreeSet<&String> = tokenizer_files.iter().collect();
    let mut parts: BTreeMap<FingerprintKind, Vec<(String, String, Vec<u8>)>> = BTreeMap::new();
    for rel in files {
        if rel.rsplit('/').next() == Some("tokenizer.json") {
            let doc = read_json(root, rel)?;
            let model = doc.get("model").cloned().unwrap_or(serde_json::Value::Null);
            let vocab = serde_json::json!({
                "vocab": model.get("vocab").cloned().unwrap_or(serde_json::Value::Null),
                "added_tokens": doc.get("added_tokens").cloned().unwrap_or(serde_json::Value::Null),
            });
            parts
                .entry(FingerprintKind::TokenizerVocab)
                .or_default()
                .push((
                    rel.clone(),
                    format!("{rel}#vocab"),
                    to_canonical_bytes(&vocab),
                ));
            if let Some(merges) = model.get("merges").filter(|m| !m.is_null()) {
                parts
                    .entry(FingerprintKind::TokenizerMerges)
                    .or_default()
                    .push((
                        rel.clone(),
                        format!("{rel}#merges"),
                        to_canonical_bytes(merges),
                    ));
            }
        } else if let Some(kind) = tokenizer_role(rel) {
            parts.entry(kind).or_default().push((
                rel.clone(),
                rel.clone(),
                canonical_content(root, rel)?,
            ));
        }
    }
    if parts.is_empty() {
        return Err(IntegrityError::NoTokenizerFound);
    }
    Ok(parts
        .into_iter()
        .map(|(kind, items)| {
            let mut digest = FramedDigest::default();
            let mut sources = Vec::new();
            for (rel, label, body) in items {
                digest.part(&label, &body);
                if !sources.contains(&rel) {
                    sources.push(rel);
                }
            }
            Fingerprint {
                kind,
                sha256: digest.finish(),
                source_files: sources,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, rel: &str, bytes: &[u8]) {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::File::create(p).unwrap().write_all(bytes).unwrap();
    }

    fn all(_: &str) -> bool {
        true
    }

    #[test]
    fn empty_and_abc_digests() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "empty", b"");
        write(d.path(), "abc", b"abc");
        assert_eq!(
            hash_file(&d.path().join("empty")).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash_file(&d.path().join("abc")).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = hash_file(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, IntegrityError::Io { .. }));
    }

    #[test]
    fn manifest_sorted_and_empty_dir() {
        let d = tempfile::tempdir().unwrap();
        assert!(build_manifest(d.path(), &all).unwrap().is_empty());
        write(d.path(), "b.txt", b"b");
        write(d.path(), "a.txt", b"a");
        let m = build_manifest(d.path(), &all).unwrap();
        let paths: Vec<&str> = m
            .entries()
            .iter()
            .map(|e| e.relative_path.as_str())
            .collect();
        assert_eq!(paths, ["a.txt", "b.txt"]);
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_hex() {
        let e = ManifestEntry {
            relative_path: "a".into(),
            size_bytes: 0,
            sha256: "0".repeat(64),
        };
        assert!(HashManifest::from_entries(vec![e.clone(), e.clone()], "").is_err());
        let bad = ManifestEntry {
            sha256: "A".repeat(64),
            ..e
        };
        assert!(HashManifest::from_entries(vec![bad], "").is_err());
    }

    #[test]
    fn verify_classifies_extra_missing_mismatch() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "a.bin", b"aaaa");
        write(d.path(), "b.bin", b"bbbb");
        let m = build_manifest(d.path(), &default_manifest_filter).unwrap();
        assert!(verify_manifest(d.path(), &m).unwrap().is_match());

        write(d.path(), "c.bin", b"new");
        let r = verify_manifest(d.path(), &m).unwrap();
        assert_eq!(r.extra, ["c.bin"]);
        assert_eq!(r.verdict, VerifyVerdict::Mismatch);
        fs::remove_file(d.path().join("c.bin")).unwrap();

        write(d.path(), "a.bin", b"aaab");
        fs::remove_file(d.path().join("b.bin")).unwrap();
        let r = verify_manifest(d.path(), &m).unwrap();
        assert_eq!(r.mismatched.len(), 1);
        assert_eq!(r.mismatched[0].path, "a.bin");
        assert_eq!(r.missing, ["b.bin"]);
    }

    #[test]
    fn manifest_files_excluded_by_default_filter() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "w.safetensors", b"x");
        let m = build_manifest(d.path(), &default_manifest_filter).unwrap();
        fs::write(d.path().join("release.manifest.json"), m.to_json()).unwrap();
        assert!(verify_manifest(d.path(), &m).unwrap().is_match());
    }

    #[test]
    fn manifest_json_round_trip() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "x/y.txt", b"hello");
        let m = build_manifest(d.path(), &all).unwrap();
        let back = HashManifest::from_json(m.to_json().as_bytes(), "").unwrap();
        assert_eq!(back.entries(), m.entries());
        assert_eq!(m.entries()[0].relative_path, "x/y.txt");
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v[0]["size"], 5);
    }

    #[cfg(unix)]
    #[test]
    fn symlinks_inside_recorded_outside_rejected() {
        let outside = tempfile::tempdir().unwrap();
        write(outside.path(), "secret", b"s3cret");
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "real.txt", b"data");
        std::os::unix::fs::symlink(d.path().join("real.txt"), d.path().join("alias.txt")).unwrap();
        let m = build_manifest(d.path(), &all).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(
            m.get("alias.txt").unwrap().sha256,
            m.get("real.txt").unwrap().sha256
        );

        std::os::unix::fs::symlink(outside.path().join("secret"), d.path().join("leak")).unwrap();
        assert!(
            matches!(build_manifest(d.path(), &all), Err(IntegrityError::SymlinkEscape(p)) if p == "leak")
        );
    }

    fn manifest_of(items: &[(&str, &[u8])]) -> HashManifest {
        let entries = items
            .iter()
            .map(|(p, b)| ManifestEntry {
                relative_path: p.to_string(),
                size_bytes: b.len() as u64,
                sha256: crate::canonical::sha256_hex(b),
            })
            .collect();
        HashManifest::from_entries(entries, "").unwrap()
    }

    fn leaf(path: &str, content: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(path.as_bytes());
        h.update([0]);
        h.update(Sha256::digest(content));
        h.finalize().into()
    }

    #[test]
    fn merkle_single_and_pair() {
        let one = manifest_of(&[("a", b"A")]);
        assert_eq!(
            merkle_root(&one).unwrap().root,
            hex::encode(leaf("a", b"A"))
        );

        let two = manifest_of(&[("a", b"A"), ("b", b"B")]);
        let mut h = Sha256::new();
        h.update(leaf("a", b"A"));
        h.update(leaf("b", b"B"));
        let r = merkle_root(&two).unwrap();
        assert_eq!(r.root, hex::encode(h.finalize()));
        assert_eq!(r.leaf_count, 2);
        assert_eq!(r.construction_id, "airs-merkle-v1");
    }

    #[test]
    fn merkle_odd_leaf_promoted() {
        let three = manifest_of(&[("a", b"A"), ("b", b"B"), ("c", b"C")]);
        let ab: [u8; 32] = {
            let mut h = Sha256::new();
            h.update(leaf("a", b"A"));
            h.update(leaf("b", b"B"));
            h.finalize().into()
        };
        let mut h = Sha256::new();
        h.update(ab);
        h.update(leaf("c", b"C"));
        assert_eq!(merkle_root(&three).unwrap().root, hex::encode(h.finalize()));
    }

    #[test]
    fn merkle_order_independent_after_sort_and_rename_sensitive() {
        let a = manifest_of(&[("a", b"A"), ("b", b"B")]);
        let b = manifest_of(&[("b", b"B"), ("a", b"A")]);
        assert_eq!(merkle_root(&a).unwrap(), merkle_root(&b).unwrap());
        let renamed = manifest_of(&[("a", b"A"), ("c", b"B")]);
        assert_ne!(
            merkle_root(&a).unwrap().root,
            merkle_root(&renamed).unwrap().root
        );
        assert!(matches!(
            merkle_root(&manifest_of(&[])),
            Err(IntegrityError::EmptyManifest)
        ));
    }

    #[test]
    fn config_fingerprint_canonicalizes() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "a/config.json",
            br#"{"hidden_size": 8, "vocab_size": 10}"#,
        );
        write(
            d.path(),
            "b/config.json",
            b"{\n  \"vocab_size\":10,\n\"hidden_size\":8}\n",
        );
        write(
            d.path(),
            "c/config.json",
            br#"{"hidden_size": 16, "vocab_size": 10}"#,
        );
        let fa = fingerprint_config(&d.path().join("a"), &["config.json".into()]).unwrap();
        let fb = fingerprint_config(&d.path().join("b"), &["config.json".into()]).unwrap();
        let fc = fingerprint_config(&d.path().join("c"), &["config.json".into()]).unwrap();
        assert_eq!(fa.sha256, fb.sha256);
        assert_ne!(fa.sha256, fc.sha256);
        assert_eq!(fa.kind, FingerprintKind::Config);
    }

    #[test]
    fn config_fingerprint_parse_error() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "config.json", b"{not json");
        assert!(matches!(
            fingerprint_config(d.path(), &["config.json".into()]),
            Err(IntegrityError::Parse { .. })
        ));
    }

    #[test]
    fn tokenizer_fingerprints() {
        let d = tempfile::tempdir().unwrap();
        write(d.path(), "vocab.json", br#"{"a":0,"b":1}"#);
        write(d.path(), "merges.txt", b"#version: 0.2\na b\n");
        let files = vec!["vocab.json".to_string(), "merges.txt".to_string()];
        let fps = fingerprint_tokenizer(d.path(), &files).unwrap();
        assert_eq!(fps.len(), 2);
        assert_eq!(fps[0].kind, FingerprintKind::TokenizerVocab);
        assert_eq!(fps[1].kind, FingerprintKind::TokenizerMerges);
        assert_eq!(fps, fingerprint_tokenizer(d.path(), &files).unwrap());

        write(d.path(), "merges.txt", b"#version: 0.2\na b\nab c\n");
        let after = fingerprint_tokenizer(d.path(), &files).unwrap();
        assert_eq!(after[0], fps[0]);
        assert_ne!(after[1].sha256, fps[1].sha256);

        assert!(matches!(
            fingerprint_tokenizer(d.path(), &["config.json".into()]),
            Err(IntegrityError::NoTokenizerFound)
        ));
    }

    #[test]
    fn combined_tokenizer_json_split_by_role() {
        let d = tempfile::tempdir().unwrap();
        write(
            d.path(),
            "tokenizer.json",
            br#"{"added_tokens":[],"model":{"type":"BPE","vocab":{"a":0,"b":1,"ab":2},"merges":["a b"]}}"#,
        );
        let fps = fingerprint_tokenizer(d.path(), &["tokenizer.json".into()]).unwrap();
        let kinds: Vec<_> = fps.iter().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            [
                FingerprintKind::TokenizerVocab,
                FingerprintKind::TokenizerMerges
            ]
        );

        // An added trigger token shows up in the vocab digest only.
        write(
            d.path(),
            "tokenizer.json",
            br#"{"added_tokens":[{"id":3,"content":"<trigger>"}],"model":{"type":"BPE","vocab":{"a":0,"b":1,"ab":2},"merges":["a b"]}}"#,
        );
        let after = fingerprint_tokenizer(d.path(), &["tokenizer.json".into()]).unwrap();
        assert_ne!(after[0].sha256, fps[0].sha256);
        assert_eq!(after[1].sha256, fps[1].sha256);
    }

    #[test]
    fn family_registry_lookup() {
        let mut reg = FamilyRegistry::default();
        reg.families.insert("llama".into(), vec!["ab".repeat(32)]);
        assert_eq!(reg.lookup(&"ab".repeat(32)), Some("llama"));
        assert_eq!(reg.lookup(&"cd".repeat(32)), None);
    }
}
