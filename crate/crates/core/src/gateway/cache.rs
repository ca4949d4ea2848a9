//! Append-only response cache keyed by prompt hash.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, Header, JsonlError};

pub const CACHE_SCHEMA: &str = "emocap/completion-cache";
pub const CACHE_VERSION: u32 = 1;

pub fn cache_header() -> Header {
    Header::new(CACHE_SCHEMA, CACHE_VERSION)
}

/// One recorded completion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub prompt_hash: String,
    pub repeat_index: u32,
    pub text: String,
    pub model_name: String,
    pub recorded_at_ms: u64,
}

/// Completions indexed in memory and mirrored to an append-only JSON-lines
/// file. Writes are serialized; a write is visible to lookups as soon as
/// `record` returns. Later entries for the same (hash, index) win.
#[derive(Debug)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, BTreeMap<u32, CacheEntry>>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(path: &Path) -> Result<Self, JsonlError> {
        let rows: Vec<CacheEntry> = jsonl::read_all(path, &cache_header())?;
        let mut entries: HashMap<String, BTreeMap<u32, CacheEntry>> = HashMap::new();
        for row in rows {
            entries
                .entry(row.prompt_hash.clone())
                .or_default()
                .insert(row.repeat_index, row);
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn record(&self, entry: CacheEntry) -> Result<(), JsonlError> {
        let mut entries = self.entries.lock().expect("cache lock poisoned");
        if let Some(path) = &self.path {
            jsonl::append(path, &cache_header(), &entry)?;
        }
        entries
            .entry(entry.prompt_hash.clone())
            .or_default()
            .insert(entry.repeat_index, entry);
        Ok(())
    }

    /// Entries for repeats `0..repeats`, or `None` unless all are present.
    pub fn lookup(&self, prompt_hash: &str, repeats: u32) -> Option<Vec<CacheEntry>> {
        let entries = self.entries.lock().expect("cache lock poisoned");
        let by_index = entries.get(prompt_hash)?;
        (0..repeats).map(|i| by_index.get(&i).cloned()).collect()
    }

    /// Number of stored repeats for a hash.
    pub fn count(&self, prompt_hash: &str) -> usize {
        let entries = self.entries.lock().expect("cache lock poisoned");
        entries.get(prompt_hash).map_or(0, BTreeMap::len)
    }
}
