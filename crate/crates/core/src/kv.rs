//! Flat key-value text files: one `key: value` per line, dotted keys for
//! maps (`counts.01: 17`) and `|` block strings indented by two spaces.
//! This is a YAML-compatible subset used for broker records, run configs
//! and reports.
//!
//! ```text
//! job_id: 00000012
//! metadata.group: XZ
//! circuit_qasm: |
//!   OPENQASM 2.0;
//!   include "qelib1.inc";
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

/// Prefix of in-progress files written by [`write_atomic`].
pub const TEMP_PREFIX: &str = ".tmp-";

const BLOCK_INDENT: &str = "  ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(String),
    Block(String),
}

impl Value {
    fn text(&self) -> &str {
        match self {
            Value::Scalar(s) | Value::Block(s) => s,
        }
    }
}

/// Ordered key-value document. Keys are unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KvDoc {
    entries: Vec<(String, Value)>,
}

fn valid_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, key: &str, value: Value) {
        assert!(valid_key(key), "invalid key {key:?}");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Sets a single-line value; panics on a malformed key or a newline in
    /// the value.
    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let value = value.to_string();
        assert!(!value.contains('\n'), "scalar value for {key} contains a newline");
        self.insert(key, Value::Scalar(value.trim().to_string()));
        self
    }

    /// Sets a multi-line block value.
    pub fn set_block(&mut self, key: &str, text: &str) -> &mut Self {
        let mut text = text.to_string();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        self.insert(key, Value::Block(text));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.text())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| KvError::Invalid {
                    key: key.to_string(),
                    message: format!("{e} (value `{v}`)"),
                })
            })
            .transpose()
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T, KvError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse_value(key)?.ok_or_else(|| KvError::Missing(key.to_string()))
    }

    /// Entries `prefix.<suffix>` as `(suffix, value)`, in document order.
    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries.iter().filter_map(move |(k, v)| {
            k.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|suffix| (suffix, v.text()))
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = KvDoc::new();
        let lines: Vec<&str> = text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let lineno = i + 1;
            let line = lines[i];
            i += 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if line.starts_with(char::is_whitespace) {
                return Err(KvError::Syntax {
                    line: lineno,
                    message: "unexpected indentation".into(),
                });
            }
            let (key, value) = line.split_once(':').ok_or_else(|| KvError::Syntax {
                line: lineno,
                message: "expected `key: value`".into(),
            })?;
            let key = key.trim();
            if !valid_key(key) {
                return Err(KvError::Syntax {
                    line: lineno,
                    message: format!("invalid key `{key}`"),
                });
            }
            if doc.contains(key) {
                return Err(KvError::Syntax {
                    line: lineno,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let value = value.trim();
            if value == "|" {
                let mut block = Vec::new();
                while i < lines.len() && (lines[i].starts_with(BLOCK_INDENT) || lines[i].trim().is_empty()) {
                    block.push(lines[i].strip_prefix(BLOCK_INDENT).unwrap_or(""));
                    i += 1;
                }
                while block.last() == Some(&"") {
                    block.pop();
                }
                let mut text = block.join("\n");
                text.push('\n');
                doc.entries.push((key.to_string(), Value::Block(text)));
            } else {
                doc.entries.push((key.to_string(), Value::Scalar(value.to_string())));
            }
        }
        Ok(doc)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            match v {
                Value::Scalar(s) if s.is_empty() => out.push_str(&format!("{k}:\n")),
                Value::Scalar(s) => out.push_str(&format!("{k}: {s}\n")),
                Value::Block(text) => {
                    out.push_str(&format!("{k}: |\n"));
                    for line in text.lines() {
                        if line.is_empty() {
                            out.push('\n');
                        } else {
                            out.push_str(BLOCK_INDENT);
                            out.push_str(line);
                            out.push('\n');
                        }
                    }
                }
            }
        }
        out
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
    }
}

impl FromStr for KvDoc {
    type Err = KvError;

    fn from_str(s: &str) -> Result<Self, KvError> {
        Self::parse(s)
    }
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `contents` to a temp file next to `path`, syncs it, then renames
/// it over `path`. Readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?
        .to_string_lossy();
    let tmp = dir.join(format!(
        "{TEMP_PREFIX}{name}-{}-{}",
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Removes leftover temp files from interrupted [`write_atomic`] calls.
pub fn remove_stale_temps(dir: &Path) -> io::Result<usize> {
    let mut removed = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_name().to_string_lossy().starts_with(TEMP_PREFIX) {
            fs::remove_file(entry.path())?;
            removed += 1;
        }
    }
    Ok(removed)
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_block() {
        let mut d = KvDoc::new();
        d.set("schema_version", 1)
            .set("metadata.group", "XZ")
            .set_block("circuit_qasm", "OPENQASM 2.0;\n\nqreg q[2];\n")
            .set("shots", 300);
        let text = d.to_text();
        assert!(text.contains("circuit_qasm: |\n  OPENQASM 2.0;\n\n  qreg q[2];\nshots: 300\n"));
        let back = KvDoc::parse(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.get("circuit_qasm"), Some("OPENQASM 2.0;\n\nqreg q[2];\n"));
    }

    #[test]
    fn prefixed_entries() {
        let d: KvDoc = "counts.00: 3\ncounts.11: 5\nshots: 8\ncountsx: 1\n".parse().unwrap();
        let got: Vec<_> = d.with_prefix("counts").collect();
        assert_eq!(got, vec![("00", "3"), ("11", "5")]);
        assert_eq!(d.parse_required::<u64>("shots").unwrap(), 8);
    }

    #[test]
    fn comments_and_blank_lines() {
        let d = KvDoc::parse("# run config\n\nseed: 7\n  \n").unwrap();
        assert_eq!(d.get("seed"), Some("7"));
        assert_eq!(d.keys().count(), 1);
    }

    #[test]
    fn errors_are_located() {
        assert_eq!(
            KvDoc::parse("a: 1\nbad line\n"),
            Err(KvError::Syntax { line: 2, message: "expected `key: value`".into() })
        );
        assert!(matches!(KvDoc::parse("a: 1\na: 2\n"), Err(KvError::Syntax { line: 2, .. })));
        assert!(matches!(KvDoc::parse("a b: 1\n"), Err(KvError::Syntax { line: 1, .. })));
        assert!(matches!(KvDoc::parse("  a: 1\n"), Err(KvError::Syntax { line: 1, .. })));
        let d = KvDoc::parse("n: x\n").unwrap();
        assert!(matches!(d.parse_required::<u32>("n"), Err(KvError::Invalid { .. })));
        assert_eq!(d.parse_required::<u32>("m"), Err(KvError::Missing("m".into())));
    }

    #[test]
    fn floats_round_trip_bitwise() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn atomic_write_replaces_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.yaml");
        write_atomic(&p, b"a: 1\n").unwrap();
        write_atomic(&p, b"a: 2\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a: 2\n");
        fs::write(dir.path().join(format!("{TEMP_PREFIX}r.yaml-1-1")), "partial").unwrap();
        assert_eq!(remove_stale_temps(dir.path()).unwrap(), 1);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
