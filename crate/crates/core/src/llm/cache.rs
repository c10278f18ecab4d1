//! Append-only JSONL transcript store keyed by a content hash.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmError, StageKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub prompt: String,
    pub response: String,
    pub timestamp: DateTime<Utc>,
}

impl Transcript {
    pub fn new(key: String, prompt: String, response: String) -> Self {
        Transcript { key, prompt, response, timestamp: Utc::now() }
    }
}

/// Hex SHA-256 over stage, prompt, model and temperature, NUL-separated.
pub fn cache_key(stage: StageKind, prompt: &str, model: &str, temperature: f64) -> String {
    let mut h = Sha256::new();
    for part in [stage.name(), prompt, model, &format!("{temperature}")] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

struct State {
    entries: HashMap<String, String>,
    file: Option<File>,
}

/// Transcripts loaded from and appended to one file. Later records win on
/// duplicate keys. Writes go through a single lock.
pub struct TranscriptCache {
    path: PathBuf,
    state: Mutex<State>,
}

impl TranscriptCache {
    /// Loads `path` if it exists; the file is created on first append.
    pub fn open(path: &Path) -> Result<TranscriptCache, LlmError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
                if line.trim().is_empty() {
                    continue;
                }
                let t: Transcript = serde_json::from_str(&line)
                    .map_err(|e| LlmError::Cache(format!("{}:{}: {e}", path.display(), i + 1)))?;
                entries.insert(t.key, t.response);
            }
        }
        Ok(TranscriptCache { path: path.to_path_buf(), state: Mutex::new(State { entries, file: None }) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.state.lock().expect("cache lock").entries.get(key).cloned()
    }

    pub fn append(&self, t: Transcript) -> Result<(), LlmError> {
        let line = serde_json::to_string(&t).map_err(|e| LlmError::Cache(e.to_string()))?;
        let mut state = self.state.lock().expect("cache lock");
        if state.file.is_none() {
            if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LlmError::Cache(format!("{}: {e}", dir.display())))?;
            }
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| LlmError::Cache(format!("{}: {e}", self.path.display())))?;
            state.file = Some(f);
        }
        let file = state.file.as_mut().expect("opened above");
        writeln!(file, "{line}").map_err(|e| LlmError::Cache(e.to_string()))?;
        file.flush().map_err(|e| LlmError::Cache(e.to_string()))?;
        state.entries.insert(t.key, t.response);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn key_depends_on_every_component() {
        let base = cache_key(StageKind::DetectEvents, "p", "m", 0.0);
        assert_eq!(base.len(), 64);
        assert_ne!(base, cache_key(StageKind::SentenceToLogic, "p", "m", 0.0));
        assert_ne!(base, cache_key(StageKind::DetectEvents, "q", "m", 0.0));
        assert_ne!(base, cache_key(StageKind::DetectEvents, "p", "n", 0.0));
        assert_ne!(base, cache_key(StageKind::DetectEvents, "p", "m", 0.01));
        assert_eq!(base, cache_key(StageKind::DetectEvents, "p", "m", 0.0));
    }

    #[test]
    fn responses_survive_reload_byte_for_byte() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/c.jsonl");
        let odd = "line one\n```\n∀x. P(x)\n```\n\t\"quoted\"\r\n";
        let c = TranscriptCache::open(&path).unwrap();
        c.append(Transcript::new("k1".into(), "prompt".into(), odd.into())).unwrap();
        c.append(Transcript::new("k2".into(), "prompt".into(), "first".into())).unwrap();
        c.append(Transcript::new("k2".into(), "prompt".into(), "second".into())).unwrap();
        let c = TranscriptCache::open(&path).unwrap();
        assert_eq!(c.get("k1").as_deref(), Some(odd));
        assert_eq!(c.get("k2").as_deref(), Some("second"));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn concurrent_appends_keep_whole_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let c = Arc::new(TranscriptCache::open(&path).unwrap());
        std::thread::scope(|s| {
            for t in 0..8 {
                let c = c.clone();
                s.spawn(move || {
                    for i in 0..25 {
                        c.append(Transcript::new(format!("{t}-{i}"), "p".into(), "r".repeat(500))).unwrap();
                    }
                });
            }
        });
        assert_eq!(TranscriptCache::open(&path).unwrap().len(), 200);
    }

    #[test]
    fn corrupt_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"key\":\"a\",\"prompt\":\"p\",\"response\":\"r\",\"timestamp\":\"2024-01-01T00:00:00Z\"}\nnot json\n").unwrap();
        let err = TranscriptCache::open(&path).err().unwrap().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
