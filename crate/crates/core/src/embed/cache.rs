use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Content-addressed vectors keyed by `sha256(model_name, text)`.
///
/// On disk: JSON Lines of `{"k": hex, "v": [num]}`, newline-terminated,
/// appended to by [`EmbedCache::flush`].
#[derive(Clone, Debug, Default)]
pub struct EmbedCache {
    entries: BTreeMap<String, Vec<f64>>,
    pending: BTreeSet<String>,
}

impl PartialEq for EmbedCache {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

#[derive(Serialize, Deserialize)]
struct Line<'a> {
    k: std::borrow::Cow<'a, str>,
    v: std::borrow::Cow<'a, [f64]>,
}

impl EmbedCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn key(model_name: &str, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(model_name.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn lookup(&self, model_name: &str, text: &str) -> Option<&[f64]> {
        self.get(&Self::key(model_name, text))
    }

    /// Adds an entry; it is written by the next [`flush`](Self::flush).
    pub fn insert(&mut self, key: String, vector: Vec<f64>) {
        self.entries.insert(key.clone(), vector);
        self.pending.insert(key);
    }

    /// Number of entries not yet written.
    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Loads `path`; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::new()),
            Err(e) => return Err(Error::io(path, e)),
        };
        Self::parse(&bytes, path)
    }

    pub fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |offset: usize, detail: String| Error::Corrupt { path: path.to_path_buf(), offset: offset as u64, detail };
        let mut entries = BTreeMap::new();
        let mut offset = 0;
        while offset < bytes.len() {
            let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
                return Err(corrupt(offset, "truncated entry (no terminating newline)".into()));
            };
            let line = &bytes[offset..offset + len];
            if !line.iter().all(u8::is_ascii_whitespace) {
                let parsed: Line = serde_json::from_slice(line).map_err(|e| corrupt(offset, format!("unreadable entry: {e}")))?;
                if parsed.k.len() != 64 || !parsed.k.bytes().all(|b| b.is_ascii_hexdigit()) {
                    return Err(corrupt(offset, "entry key is not a sha-256 hex digest".into()));
                }
                if parsed.v.is_empty() || parsed.v.iter().any(|x| !x.is_finite()) {
                    return Err(corrupt(offset, "entry vector is empty or non-finite".into()));
                }
                entries.insert(parsed.k.into_owned(), parsed.v.into_owned());
            }
            offset += len + 1;
        }
        Ok(EmbedCache { entries, pending: BTreeSet::new() })
    }

    /// Appends every pending entry to `path` in a single write.
    pub fn flush(&mut self, path: &Path) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for k in &self.pending {
            let line = Line { k: k.as_str().into(), v: self.entries[k].as_slice().into() };
            serde_json::to_writer(&mut buf, &line).map_err(|e| Error::Parse(e.to_string()))?;
            buf.push(b'\n');
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        f.sync_data().map_err(|e| Error::io(path, e))?;
        self.pending.clear();
        Ok(())
    }
}
