//! Static pickle opcode scanner.
//!
//! Walks the opcode stream and models the unpickler's stack symbolically so that
//! `STACK_GLOBAL` and `REDUCE` can report which global they would resolve or
//! call. Nothing is ever imported, constructed or called.
//!
//! Every opcode able to import a name or invoke a callable is flagged Critical
//! regardless of which name it references.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::Path;

use serde_json::json;

use super::finding::{Finding, Locus};
use super::ScanError;

const THREAT_UNSAFE_DESERIALIZATION: &str = "2.1";
/// Largest pickle member read into memory from a container.
pub const MAX_PICKLE_BYTES: u64 = 1 << 30;

/// Opcode argument layouts, after pickletools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgKind {
    None,
    U1,
    U2,
    I4,
    U4,
    F8,
    U8,
    Line,
    TwoLines,
    Len1,
    Len4,
    /// Signed 4-byte length (BINSTRING, LONG4).
    SLen4,
    Len8,
}

struct OpInfo {
    name: &'static str,
    arg: ArgKind,
}

fn opcode_info(code: u8) -> Option<OpInfo> {
    use ArgKind::*;
    let (name, arg) = match code {
        b'(' => ("MARK", None),
        b'.' => ("STOP", None),
        b'0' => ("POP", None),
        b'1' => ("POP_MARK", None),
        b'2' => ("DUP", None),
        b'F' => ("FLOAT", Line),
        b'I' => ("INT", Line),
        b'J' => ("BININT", I4),
        b'K' => ("BININT1", U1),
        b'L' => ("LONG", Line),
        b'M' => ("BININT2", U2),
        b'N' => ("NONE", None),
        b'P' => ("PERSID", Line),
        b'Q' => ("BINPERSID", None),
        b'R' => ("REDUCE", None),
        b'S' => ("STRING", Line),
        b'T' => ("BINSTRING", SLen4),
        b'U' => ("SHORT_BINSTRING", Len1),
        b'V' => ("UNICODE", Line),
        b'X' => ("BINUNICODE", Len4),
        b'a' => ("APPEND", None),
        b'b' => ("BUILD", None),
        b'c' => ("GLOBAL", TwoLines),
        b'd' => ("DICT", None),
        b'}' => ("EMPTY_DICT", None),
        b'e' => ("APPENDS", None),
        b'g' => ("GET", Line),
        b'h' => ("BINGET", U1),
        b'i' => ("INST", TwoLines),
        b'j' => ("LONG_BINGET", U4),
        b'l' => ("LIST", None),
        b']' => ("EMPTY_LIST", None),
        b'o' => ("OBJ", None),
        b'p' => ("PUT", Line),
        b'q' => ("BINPUT", U1),
        b'r' => ("LONG_BINPUT", U4),
        b's' => ("SETITEM", None),
        b't' => ("TUPLE", None),
        b')' => ("EMPTY_TUPLE", None),
        b'u' => ("SETITEMS", None),
        b'G' => ("BINFLOAT", F8),
        b'B' => ("BINBYTES", Len4),
        b'C' => ("SHORT_BINBYTES", Len1),
        0x80 => ("PROTO", U1),
        0x81 => ("NEWOBJ", None),
        0x82 => ("EXT1", U1),
        0x83 => ("EXT2", U2),
        0x84 => ("EXT4", I4),
        0x85 => ("TUPLE1", None),
        0x86 => ("TUPLE2", None),
        0x87 => ("TUPLE3", None),
        0x88 => ("NEWTRUE", None),
        0x89 => ("NEWFALSE", None),
        0x8a => ("LONG1", Len1),
        0x8b => ("LONG4", SLen4),
        0x8c => ("SHORT_BINUNICODE", Len1),
        0x8d => ("BINUNICODE8", Len8),
        0x8e => ("BINBYTES8", Len8),
        0x8f => ("EMPTY_SET", None),
        0x90 => ("ADDITEMS", None),
        0x91 => ("FROZENSET", None),
        0x92 => ("NEWOBJ_EX", None),
        0x93 => ("STACK_GLOBAL", None),
        0x94 => ("MEMOIZE", None),
        0x95 => ("FRAME", U8),
        0x96 => ("BYTEARRAY8", Len8),
        0x97 => ("NEXT_BUFFER", None),
        0x98 => ("READONLY_BUFFER", None),
        _ => return Option::None,
    };
    Some(OpInfo { name, arg })
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    None,
    Int(i64),
    Float,
    Text(String),
    Pair(String, String),
    Blob,
}

struct Op {
    code: u8,
    name: &'static str,
    offset: usize,
    arg: Arg,
}

/// Symbolic stack values.
#[derive(Debug, Clone, PartialEq)]
enum Sym {
    Mark,
    Str(String),
    /// A resolved global, `module.name`.
    Global(String),
    /// The result of calling or instantiating something.
    Made(String),
    Data,
}

impl Sym {
    fn describe(&self) -> String {
        match self {
            Sym::Global(g) => g.clone(),
            Sym::Made(m) => format!("<object from {m}>"),
            Sym::Str(s) => format!("{s:?}"),
            _ => "<unknown>".into(),
        }
    }
}

struct Disassembler<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Disassembler<'a> {
    fn take(&mut self, n: usize, op_offset: usize) -> Result<&'a [u8], ScanError> {
        if n > self.buf.len() - self.pos {
            return Err(ScanError::TruncatedStream(op_offset as u64));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn line(&mut self, op_offset: usize) -> Result<String, ScanError> {
        let rest = &self.buf[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(ScanError::TruncatedStream(op_offset as u64))?;
        let text = String::from_utf8_lossy(&rest[..end]).into_owned();
        self.pos += end + 1;
        Ok(text.strip_suffix('\r').map(str::to_string).unwrap_or(text))
    }

    fn le_uint(&mut self, n: usize, op_offset: usize) -> Result<u64, ScanError> {
        let bytes = self.take(n, op_offset)?;
        Ok(bytes
            .iter()
            .rev()
            .fold(0u64, |acc, &b| (acc << 8) | b as u64))
    }

    fn sized(&mut self, len: u64, op_offset: usize) -> Result<&'a [u8], ScanError> {
        let len = usize::try_from(len).map_err(|_| ScanError::TruncatedStream(op_offset as u64))?;
        self.take(len, op_offset)
    }

    /// Decodes the next opcode. `Ok(None)` at end of input; `Err(code)` for an unknown byte.
    fn next(&mut self) -> Result<Option<Result<Op, u8>>, ScanError> {
        if self.pos >= self.buf.len() {
            return Ok(None);
        }
        let offset = self.pos;
        let code = self.buf[offset];
        let Some(info) = opcode_info(code) else {
            return Ok(Some(Err(code)));
        };
        self.pos += 1;
        let arg = match info.arg {
            ArgKind::None => Arg::None,
            ArgKind::U1 => Arg::Int(self.le_uint(1, offset)? as i64),
            ArgKind::U2 => Arg::Int(self.le_uint(2, offset)? as i64),
            ArgKind::I4 => Arg::Int(self.le_uint(4, offset)? as u32 as i32 as i64),
            ArgKind::U4 => Arg::Int(self.le_uint(4, offset)? as i64),
            ArgKind::U8 => Arg::Int(self.le_uint(8, offset)? as i64),
            ArgKind::F8 => {
                self.take(8, offset)?;
                Arg::Float
            }
            ArgKind::Line => Arg::Text(self.line(offset)?),
            ArgKind::TwoLines => {
                let module = self.line(offset)?;
                let name = self.line(offset)?;
                Arg::Pair(module, name)
            }
            ArgKind::Len1 | ArgKind::Len4 | ArgKind::SLen4 | ArgKind::Len8 => {
                let len = match info.arg {
                    ArgKind::Len1 => self.le_uint(1, offset)?,
                    ArgKind::Len4 => self.le_uint(4, offset)?,
                    ArgKind::SLen4 => {
                        let v = self.le_uint(4, offset)? as u32 as i32;
                        if v < 0 {
                            return Err(ScanError::TruncatedStream(offset as u64));
                        }
                        v as u64
                    }
                    _ => self.le_uint(8, offset)?,
                };
                let bytes = self.sized(len, offset)?;
                match code {
                    0x8c | b'X' | 0x8d => Arg::Text(String::from_utf8_lossy(bytes).into_owned()),
                    b'U' | b'T' => Arg::Text(bytes.iter().map(|&b| b as char).collect()),
                    _ => Arg::Blob,
                }
            }
        };
        Ok(Some(Ok(Op {
            code,
            name: info.name,
            offset,
            arg,
        })))
    }
}

/// Unquotes a protocol-0 STRING argument (`'abc'` or `"abc"`).
fn unquote(s: &str) -> String {
    let t = s.trim();
    if t.len() >= 2
        && (t.starts_with('\'') && t.ends_with('\'') || t.starts_with('"') && t.ends_with('"'))
    {
        t[1..t.len() - 1].to_string()
    } else {
        t.to_string()
    }
}

#[derive(Default)]
struct Machine {
    stack: Vec<Sym>,
    memo: HashMap<i64, Sym>,
}

impl Machine {
    fn pop(&mut self) -> Sym {
        self.stack.pop().unwrap_or(Sym::Data)
    }

    fn pop_mark(&mut self) -> Vec<Sym> {
        match self.stack.iter().rposition(|s| *s == Sym::Mark) {
            Some(i) => {
                let items = self.stack.split_off(i + 1);
                self.stack.pop();
                items
            }
            None => std::mem::take(&mut self.stack),
        }
    }

    fn top(&self) -> Sym {
        self.stack.last().cloned().unwrap_or(Sym::Data)
    }
}

/// Result of disassembling one buffer: findings plus every global it references.
#[derive(Debug, Default)]
pub struct PickleReport {
    pub findings: Vec<Finding>,
    pub globals: Vec<String>,
    pub opcode_count: usize,
    pub streams: usize,
}

fn call_finding(op: &Op, index: usize, what: String, evidence: serde_json::Value) -> Finding {
    Finding::critical(
        &format!("pickle.{}", op.name.to_ascii_lowercase()),
        THREAT_UNSAFE_DESERIALIZATION,
        "",
        format!("{} {} at offset {}", op.name, what, op.offset),
    )
    .at(Locus {
        offset: Some(op.offset as u64),
        opcode_index: Some(index),
        member: None,
    })
    .with_evidence(evidence)
}

/// Disassembles `bytes` without executing anything and reports every import- or
/// call-capable opcode. Consecutive pickles (as in legacy torch files) are all
/// scanned; scanning stops at the first byte after a STOP that is not PROTO.
pub fn disassemble(bytes: &[u8]) -> Result<PickleReport, ScanError> {
    if bytes.is_empty() {
        return Err(ScanError::TruncatedStream(0));
    }
    if opcode_info(bytes[0]).is_none() {
        return Err(ScanError::NotAPickle);
    }
    let mut report = PickleReport::default();
    let mut dis = Disassembler { buf: bytes, pos: 0 };
    let mut m = Machine::default();
    let mut index = 0usize;
    let mut stopped = false;

    loop {
        let op = match dis.next()? {
            None => {
                if !stopped {
                    return Err(ScanError::TruncatedStream(bytes.len() as u64));
                }
                break;
            }
            Some(Err(code)) => {
                if stopped {
                    break;
                }
                report.findings.push(
                    Finding::warn(
                        "pickle.unknown_opcode",
                        Some(THREAT_UNSAFE_DESERIALIZATION),
                        "",
                        format!(
                            "unknown opcode 0x{code:02x} at offset {}; scan of this stream stopped",
                            dis.pos
                        ),
                    )
                    .at(Locus {
                        offset: Some(dis.pos as u64),
                        opcode_index: Some(index),
                        member: None,
                    }),
                );
                break;
            }
            Some(Ok(op)) => op,
        };
        if stopped {
            if op.code != 0x80 {
                if dis.buf.len() > op.offset {
                    report.findings.push(
                        Finding::info(
                            "pickle.trailing_data",
                            None,
                            "",
                            format!(
                                "{} bytes of non-pickle data after STOP",
                                bytes.len() - op.offset
                            ),
                        )
                        .at(Locus::offset(op.offset as u64)),
                    );
                }
                break;
            }
            stopped = false;
            m = Machine::default();
        }
        report.opcode_count += 1;
        if op.offset == 0 || op.code == 0x80 {
            report.streams += usize::from(op.code == 0x80 || op.offset == 0);
        }
        step(&mut m, &op, index, &mut report);
        if op.code == b'.' {
            stopped = true;
        }
        index += 1;
    }
    Ok(report)
}

fn step(m: &mut Machine, op: &Op, index: usize, report: &mut PickleReport) {
    match op.code {
        b'(' => m.stack.push(Sym::Mark),
        b'.' => {
            m.pop();
        }
        b'0' => {
            m.pop();
        }
        b'1' => {
            m.pop_mark();
        }
        b'2' => {
            let t = m.top();
            m.stack.push(t);
        }
        b'S' => {
            if let Arg::Text(t) = &op.arg {
                m.stack.push(Sym::Str(unquote(t)));
            }
        }
        b'V' | b'X' | 0x8c | 0x8d | b'U' | b'T' => {
            if let Arg::Text(t) = &op.arg {
                m.stack.push(Sym::Str(t.clone()));
            }
        }
        b'F' | b'I' | b'J' | b'K' | b'L' | b'M' | b'N' | b'G' | b'B' | b'C' | 0x88 | 0x89
        | 0x8a | 0x8b | 0x8e | 0x96 | 0x97 | b'}' | b']' | b')' | 0x8f => m.stack.push(Sym::Data),
        b'P' => {
            m.stack.push(Sym::Data);
            report.findings.push(persistent_id_finding(op, index));
        }
        b'Q' => {
            m.pop();
            m.stack.push(Sym::Data);
            report.findings.push(persistent_id_finding(op, index));
        }
        b'a' => {
            m.pop();
        }
        b'e' | b'u' | 0x90 => {
            m.pop_mark();
        }
        b'l' | b't' | b'd' | 0x91 => {
            m.pop_mark();
            m.stack.push(Sym::Data);
        }
        0x85..=0x87 => {
            for _ in 0..(op.code - 0x84) {
                m.pop();
            }
            m.stack.push(Sym::Data);
        }
        b's' => {
            m.pop();
            m.pop();
        }
        0x98 => {
            m.pop();
            m.stack.push(Sym::Data);
        }
        b'g' | b'h' | b'j' => {
            let key = match &op.arg {
                Arg::Int(i) => *i,
                Arg::Text(t) => t.trim().parse().unwrap_or(-1),
                _ => -1,
            };
            let v = m.memo.get(&key).cloned().unwrap_or(Sym::Data);
            m.stack.push(v);
        }
        b'p' | b'q' | b'r' => {
            let key = match &op.arg {
                Arg::Int(i) => *i,
                Arg::Text(t) => t.trim().parse().unwrap_or(-1),
                _ => -1,
            };
            m.memo.insert(key, m.top());
        }
        0x94 => {
            let key = m.memo.len() as i64;
            m.memo.insert(key, m.top());
        }
        0x80 => {
            if let Arg::Int(p) = op.arg {
                if p > 5 {
                    report.findings.push(
                        Finding::warn(
                            "pickle.protocol",
                            Some(THREAT_UNSAFE_DESERIALIZATION),
                            "",
                            format!("unsupported pickle protocol {p}"),
                        )
                        .at(Locus::offset(op.offset as u64)),
                    );
                }
            }
        }
        0x95 => {}
        b'c' => {
            let Arg::Pair(module, name) = &op.arg else {
                return;
            };
            let global = format!("{module}.{name}");
            report.globals.push(global.clone());
            report.findings.push(call_finding(
                op,
                index,
                format!("imports {global}"),
                json!({"opcode": op.name, "module": module, "name": name}),
            ));
            m.stack.push(Sym::Global(global));
        }
        0x93 => {
            let name = m.pop();
            let module = m.pop();
            let (module, name) = match (module, name) {
                (Sym::Str(mo), Sym::Str(na)) => (mo, na),
                (mo, na) => (mo.describe(), na.describe()),
            };
            let global = format!("{module}.{name}");
            report.globals.push(global.clone());
            report.findings.push(call_finding(
                op,
                index,
                format!("imports {global}"),
                json!({"opcode": op.name, "module": module, "name": name}),
            ));
            m.stack.push(Sym::Global(global));
        }
        0x82..=0x84 => {
            let code = if let Arg::Int(c) = op.arg { c } else { -1 };
            let global = format!("<extension registry code {code}>");
            report.globals.push(global.clone());
            report.findings.push(call_finding(
                op,
                index,
                format!("imports {global}"),
                json!({"opcode": op.name, "extension_code": code}),
            ));
            m.stack.push(Sym::Global(global));
        }
        b'i' => {
            let Arg::Pair(module, name) = &op.arg else {
                return;
            };
            m.pop_mark();
            let global = format!("{module}.{name}");
            report.globals.push(global.clone());
            report.findings.push(call_finding(
                op,
                index,
                format!("instantiates {global}"),
                json!({"opcode": op.name, "module": module, "name": name, "callable": global}),
            ));
            m.stack.push(Sym::Made(global));
        }
        b'o' => {
            let items = m.pop_mark();
            let class = items.first().cloned().unwrap_or(Sym::Data).describe();
            report.findings.push(call_finding(
                op,
                index,
                format!("instantiates {class}"),
                json!({"opcode": op.name, "callable": class}),
            ));
            m.stack.push(Sym::Made(class));
        }
        b'R' => {
            let _args = m.pop();
            let callable = m.pop().describe();
            report.findings.push(call_finding(
                op,
                index,
                format!("calls {callable}"),
                json!({"opcode": op.name, "callable": callable}),
            ));
            m.stack.push(Sym::Made(callable));
        }
        0x81 => {
            let _args = m.pop();
            let class = m.pop().describe();
            report.findings.push(call_finding(
                op,
                index,
                format!("instantiates {class}"),
                json!({"opcode": op.name, "callable": class}),
            ));
            m.stack.push(Sym::Made(class));
        }
        0x92 => {
            let _kwargs = m.pop();
            let _args = m.pop();
            let class = m.pop().describe();
            report.findings.push(call_finding(
                op,
                index,
                format!("instantiates {class}"),
                json!({"opcode": op.name, "callable": class}),
            ));
            m.stack.push(Sym::Made(class));
        }
        b'b' => {
            let _state = m.pop();
            let target = m.top();
            // BUILD invokes __setstate__ or updates __dict__ on its target; it can
            // only reach code when the target came out of an import or call.
            match target {
                Sym::Made(_) | Sym::Global(_) => report.findings.push(call_finding(
                    op,
                    index,
                    format!("applies state to {}", target.describe()),
                    json!({"opcode": op.name, "callable": target.describe()}),
                )),
                _ => report.findings.push(
                    Finding::warn(
                        "pickle.build",
                        Some(THREAT_UNSAFE_DESERIALIZATION),
                        "",
                        format!("BUILD on a non-object at offset {}", op.offset),
                    )
                    .at(Locus {
                        offset: Some(op.offset as u64),
                        opcode_index: Some(index),
                        member: None,
                    }),
                ),
            }
        }
        _ => {}
    }
}

fn persistent_id_finding(op: &Op, index: usize) -> Finding {
    Finding::warn(
        "pickle.persistent_id",
        Some(THREAT_UNSAFE_DESERIALIZATION),
        "",
        format!(
            "{} hands control to the loader's persistent_load at offset {}",
            op.name, op.offset
        ),
    )
    .at(Locus {
        offset: Some(op.offset as u64),
        opcode_index: Some(index),
        member: None,
    })
}

/// Scans a pickle opcode stream held in memory. Findings carry an empty path.
pub fn scan_pickle_stream(bytes: &[u8]) -> Result<Vec<Finding>, ScanError> {
    Ok(disassemble(bytes)?.findings)
}

pub fn is_zip(head: &[u8]) -> bool {
    head.starts_with(b"PK\x03\x04") || head.starts_with(b"PK\x05\x06")
}

/// Protocol 2+ pickles open with PROTO.
pub fn looks_like_pickle(head: &[u8]) -> bool {
    head.len() >= 2 && head[0] == 0x80 && (1..=5).contains(&head[1])
}

pub fn is_pickle_member(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with(".pkl") || lower.ends_with(".pickle")
}

/// Names of pickle members in a ZIP container, read from the central directory.
pub fn zip_pickle_members(path: &Path) -> Result<Vec<String>, ScanError> {
    let file = File::open(path).map_err(|e| ScanError::io(path, e))?;
    let archive = zip::ZipArchive::new(file).map_err(|e| ScanError::CorruptZip(e.to_string()))?;
    Ok(archive
        .file_names()
        .filter(|n| is_pickle_member(n))
        .map(str::to_string)
        .collect())
}

/// Scans a pickle-bearing file: a ZIP container (each `.pkl` member scanned in
/// memory, never extracted to disk) or a bare pickle. `rel_path` becomes the
/// finding path.
pub fn scan_pickle_container(path: &Path, rel_path: &str) -> Result<PickleReport, ScanError> {
    let mut file = File::open(path).map_err(|e| ScanError::io(path, e))?;
    let mut head = [0u8; 4];
    let n = file.read(&mut head).map_err(|e| ScanError::io(path, e))?;
    file.seek(SeekFrom::Start(0))
        .map_err(|e| ScanError::io(path, e))?;

    if is_zip(&head[..n]) {
        let mut archive =
            zip::ZipArchive::new(file).map_err(|e| ScanError::CorruptZip(e.to_string()))?;
        let mut members: Vec<String> = archive
            .file_names()
            .filter(|n| is_pickle_member(n))
            .map(str::to_string)
            .collect();
        members.sort();
        let mut report = PickleReport::default();
        if members.is_empty() {
            report.findings.push(Finding::info(
                "pickle.no_code_paths",
                None,
                rel_path,
                "no serialized code paths: container has no pickle members",
            ));
            return Ok(report);
        }
        for member in members {
            let mut entry = archive
                .by_name(&member)
                .map_err(|e| ScanError::CorruptZip(e.to_string()))?;
            if entry.size() > MAX_PICKLE_BYTES {
                report.findings.push(
                    Finding::critical(
                        "pickle.oversized",
                        THREAT_UNSAFE_DESERIALIZATION,
                        rel_path,
                        format!(
                            "pickle member of {} bytes exceeds the scan limit",
                            entry.size()
                        ),
                    )
                    .at(Locus {
                        member: Some(member.clone()),
                        ..Locus::default()
                    }),
                );
                continue;
            }
            let mut bytes = Vec::with_capacity(entry.size() as usize);
            entry
                .read_to_end(&mut bytes)
                .map_err(|e| ScanError::CorruptZip(format!("{member}: {e}")))?;
            let sub = disassemble(&bytes).map_err(|e| e.in_member(&member))?;
            merge(&mut report, sub, rel_path, Some(&member));
        }
        Ok(report)
    } else {
        let len = file.metadata().map_err(|e| ScanError::io(path, e))?.len();
        let mut bytes = Vec::new();
        file.take(MAX_PICKLE_BYTES)
            .read_to_end(&mut bytes)
            .map_err(|e| ScanError::io(path, e))?;
        let sub = disassemble(&bytes)?;
        let mut report = PickleReport::default();
        merge(&mut report, sub, rel_path, None);
        if len > MAX_PICKLE_BYTES {
            report.findings.push(Finding::warn(
                "pickle.partial_scan",
                Some(THREAT_UNSAFE_DESERIALIZATION),
                rel_path,
                format!("only the first {MAX_PICKLE_BYTES} bytes were scanned"),
            ));
        }
        Ok(report)
    }
}

fn merge(into: &mut PickleReport, sub: PickleReport, rel_path: &str, member: Option<&str>) {
    for mut f in sub.findings {
        f.path = rel_path.to_string();
        if let Some(m) = member {
            f.locus.get_or_insert_with(Locus::default).member = Some(m.to_string());
        }
        into.findings.push(f);
    }
    into.globals.extend(sub.globals);
    into.opcode_count += sub.opcode_count;
    into.streams += sub.streams;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packaging::Severity;

    fn criticals(f: &[Finding]) -> Vec<&Finding> {
        f.iter().filter(|f| f.is_critical()).collect()
    }

    #[test]
    fn empty_is_truncated_at_zero() {
        assert!(matches!(
            scan_pickle_stream(b""),
            Err(ScanError::TruncatedStream(0))
        ));
    }

    #[test]
    fn invalid_first_byte_is_not_a_pickle() {
        assert!(matches!(
            scan_pickle_stream(b"\x00\x01"),
            Err(ScanError::NotAPickle)
        ));
        assert!(matches!(
            scan_pickle_stream(b"{\"a\": 1}"),
            Err(ScanError::NotAPickle)
        ));
    }

    #[test]
    fn missing_stop_is_truncated() {
        // PROTO 2, EMPTY_LIST, no STOP
        assert!(matches!(
            scan_pickle_stream(b"\x80\x02]"),
            Err(ScanError::TruncatedStream(3))
        ));
        // SHORT_BINUNICODE claiming 10 bytes with 2 present
        assert!(matches!(
            scan_pickle_stream(b"\x80\x04\x8c\x0aab"),
            Err(ScanError::TruncatedStream(2))
        ));
    }

    #[test]
    fn data_only_protocol2_list() {
        // pickle.dumps([1, 2, 3], protocol=2)
        let bytes = b"\x80\x02]q\x00(K\x01K\x02K\x03e.";
        let r = disassemble(bytes).unwrap();
        assert!(r.findings.is_empty());
        assert!(r.globals.is_empty());
    }

    #[test]
    fn global_reduce_flagged_with_name() {
        let bytes = b"cos\nsystem\n(S'echo hi'\ntR.";
        let r = disassemble(bytes).unwrap();
        let crit = criticals(&r.findings);
        assert_eq!(crit.len(), 2);
        assert_eq!(crit[0].id, "pickle.global");
        assert_eq!(crit[0].evidence["module"], "os");
        assert_eq!(crit[0].evidence["name"], "system");
        assert_eq!(crit[0].threat_ref.as_deref(), Some("2.1"));
        assert_eq!(crit[1].id, "pickle.reduce");
        assert_eq!(crit[1].evidence["callable"], "os.system");
        assert_eq!(r.globals, ["os.system"]);
    }

    #[test]
    fn stack_global_resolves_memoized_strings() {
        // protocol 4: SHORT_BINUNICODE 'subprocess' MEMOIZE SHORT_BINUNICODE 'Popen' MEMOIZE
        // STACK_GLOBAL MEMOIZE ( SHORT_BINUNICODE 'id' ... ) TUPLE1 REDUCE STOP
        let mut b = vec![0x80, 4, 0x95];
        b.extend_from_slice(&[0u8; 8]);
        b.push(0x8c);
        b.push(10);
        b.extend_from_slice(b"subprocess");
        b.push(0x94);
        b.push(0x8c);
        b.push(5);
        b.extend_from_slice(b"Popen");
        b.push(0x94);
        b.push(0x93);
        b.push(0x94);
        b.push(b'h');
        b.push(0); // BINGET 0 -> "subprocess" (exercise memo lookups)
        b.push(b'0'); // POP it again
        b.push(0x8c);
        b.push(2);
        b.extend_from_slice(b"id");
        b.push(0x85);
        b.push(b'R');
        b.push(b'.');
        let r = disassemble(&b).unwrap();
        assert_eq!(r.globals, ["subprocess.Popen"]);
        let crit = criticals(&r.findings);
        assert_eq!(crit[0].id, "pickle.stack_global");
        assert_eq!(crit[1].evidence["callable"], "subprocess.Popen");
    }

    #[test]
    fn inst_obj_newobj_build() {
        let inst = b"(S'x'\nibuiltins\nprint\n.";
        let r = disassemble(inst).unwrap();
        assert_eq!(criticals(&r.findings)[0].id, "pickle.inst");

        let obj = b"(cbuiltins\nobject\no.";
        let r = disassemble(obj).unwrap();
        let ids: Vec<_> = criticals(&r.findings)
            .iter()
            .map(|f| f.id.clone())
            .collect();
        assert_eq!(ids, ["pickle.global", "pickle.obj"]);

        let newobj_build = b"\x80\x02ccollections\nOrderedDict\n)\x81}b.";
        let r = disassemble(newobj_build).unwrap();
        let ids: Vec<_> = criticals(&r.findings)
            .iter()
            .map(|f| f.id.clone())
            .collect();
        assert_eq!(ids, ["pickle.global", "pickle.newobj", "pickle.build"]);
    }

    #[test]
    fn build_on_plain_data_is_only_a_warning() {
        let r = disassemble(b"\x80\x02}}b.").unwrap();
        assert!(criticals(&r.findings).is_empty());
        assert_eq!(r.findings[0].severity, Severity::Warn);
    }

    #[test]
    fn unknown_opcode_mid_stream_warns() {
        let r = disassemble(b"\x80\x02]\xff").unwrap();
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].id, "pickle.unknown_opcode");
        assert_eq!(r.findings[0].severity, Severity::Warn);
    }

    #[test]
    fn consecutive_streams_all_scanned() {
        let mut b = b"\x80\x02K\x01.".to_vec();
        b.extend_from_slice(b"\x80\x02cos\nsystem\n.");
        b.extend_from_slice(b"raw storage bytes");
        let r = disassemble(&b).unwrap();
        assert_eq!(r.globals, ["os.system"]);
        assert_eq!(r.streams, 2);
        assert!(r.findings.iter().any(|f| f.id == "pickle.trailing_data"));
    }

    #[test]
    fn persistent_id_warns() {
        let r = disassemble(b"\x80\x02K\x00Q.").unwrap();
        assert_eq!(r.findings[0].id, "pickle.persistent_id");
        assert!(criticals(&r.findings).is_empty());
    }

    #[test]
    fn sniffers() {
        assert!(looks_like_pickle(b"\x80\x04\x95"));
        assert!(!looks_like_pickle(b"\x80\x09"));
        assert!(is_zip(b"PK\x03\x04rest"));
        assert!(is_pickle_member("archive/data.pkl"));
        assert!(!is_pickle_member("archive/data/0"));
    }
}
