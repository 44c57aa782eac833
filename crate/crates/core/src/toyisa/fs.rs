//! Simulated file system: numbered files carrying bytes plus one taint tag
//! word each. File reads are the canonical taint source; file writes fold
//! the written buffer's word tags into the file tag. Tags persist across
//! program runs within a session, so a tag written by one run is what the
//! next run's read picks up.

use std::collections::BTreeMap;

use super::ToyIsaError;

/// One file: contents plus its taint tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimFile {
    pub bytes: Vec<u8>,
    pub tag: u32,
}

/// The whole simulated file system, keyed by numeric file id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimFileSystem {
    files: BTreeMap<u32, SimFile>,
}

impl SimFileSystem {
    pub fn new() -> Self {
        SimFileSystem::default()
    }

    pub fn insert_file(&mut self, id: u32, bytes: Vec<u8>, tag: u32) {
        self.files.insert(id, SimFile { bytes, tag });
    }

    pub fn file(&self, id: u32) -> Option<&SimFile> {
        self.files.get(&id)
    }

    /// File contents; a missing file reads as empty.
    pub fn bytes(&self, id: u32) -> &[u8] {
        self.files.get(&id).map(|f| f.bytes.as_slice()).unwrap_or(&[])
    }

    /// Replaces a file's bytes, creating the file (untagged) if needed. The
    /// tag is owned by the tag pipeline and is not touched here.
    pub fn write_bytes(&mut self, id: u32, bytes: Vec<u8>) {
        self.files.entry(id).or_insert(SimFile { bytes: Vec::new(), tag: 0 }).bytes = bytes;
    }

    /// File tag; a missing file is untainted.
    pub fn tag(&self, id: u32) -> u32 {
        self.files.get(&id).map(|f| f.tag).unwrap_or(0)
    }

    /// Snapshot of every file's tag, the initial table for a pipeline run.
    pub fn tags(&self) -> BTreeMap<u32, u32> {
        self.files.iter().map(|(&id, f)| (id, f.tag)).collect()
    }

    /// Writes a run's final tag table back, creating empty files for ids the
    /// run introduced. This is the session-persistence step.
    pub fn apply_tags(&mut self, tags: &BTreeMap<u32, u32>) {
        for (&id, &tag) in tags {
            self.files.entry(id).or_insert(SimFile { bytes: Vec::new(), tag: 0 }).tag = tag;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &SimFile)> {
        self.files.iter().map(|(&id, f)| (id, f))
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Parses a manifest with one `file_id,hex_tag,path` line per file; `#`
    /// starts a comment. `load` maps each path to its bytes so callers
    /// control how (and relative to what) paths resolve.
    pub fn parse_manifest<F>(text: &str, mut load: F) -> Result<SimFileSystem, ToyIsaError>
    where
        F: FnMut(&str) -> Result<Vec<u8>, String>,
    {
        let mut fs = SimFileSystem::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| ToyIsaError::Manifest { line: line_no, reason };
            let mut parts = line.splitn(3, ',').map(str::trim);
            let id = parts
                .next()
                .and_then(parse_u32)
                .ok_or_else(|| bad("expected numeric file id".into()))?;
            let tag = parts
                .next()
                .and_then(parse_u32)
                .ok_or_else(|| bad("expected a tag value after the file id".into()))?;
            let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(|| {
                bad("expected a path after the tag".into())
            })?;
            let bytes = load(path).map_err(|e| bad(format!("cannot load '{path}': {e}")))?;
            fs.insert_file(id, bytes, tag);
        }
        Ok(fs)
    }
}

fn parse_u32(s: &str) -> Option<u32> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}
