//! JSON-lines cassettes: one `{request_fingerprint, prompt_id, completions}`
//! object per backend call, in call order.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::prompts::PromptId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<PromptId>,
    pub completions: Vec<String>,
}

impl CassetteEntry {
    pub fn new(request: &ChatRequest, completions: Vec<String>) -> Self {
        Self {
            request_fingerprint: request.fingerprint(),
            prompt_id: request.prompt_id,
            completions,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cassette {
    pub entries: Vec<CassetteEntry>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::CassetteIo {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Cassette {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("cassette entry serializes") + "\n")
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BackendError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| io_err(path, e))
    }
}

/// Forwards to `inner` and appends every successful call to a cassette file.
/// Each entry is flushed before the completions are returned.
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    file: Mutex<File>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    /// Truncates any existing cassette at `path`.
    pub fn create(inner: B, path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        Ok(Self {
            inner,
            path,
            file: Mutex::new(file),
        })
    }

    /// Appends to an existing cassette instead of starting a new one.
    pub fn append(inner: B, path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(Self {
            inner,
            path,
            file: Mutex::new(file),
        })
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        // Hold the file lock across the call so entry order matches call order.
        let mut file = self.file.lock().unwrap();
        let completions = self.inner.complete(request)?;
        let mut line = serde_json::to_string(&CassetteEntry::new(request, completions.clone()))
            .map_err(|e| io_err(&self.path, e))?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| io_err(&self.path, e))?;
        Ok(completions)
    }
}

/// Serves completions from a cassette in order, checking each request's
/// fingerprint against the recorded one unless built with
/// [`ReplayBackend::unchecked`].
#[derive(Debug)]
pub struct ReplayBackend {
    entries: Vec<CassetteEntry>,
    cursor: Mutex<usize>,
    verify: bool,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self {
            entries: cassette.entries,
            cursor: Mutex::new(0),
            verify: true,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        Ok(Self::new(Cassette::load(path)?))
    }

    /// Ignores fingerprints; the cassette acts as a plain reply script.
    pub fn unchecked(cassette: Cassette) -> Self {
        Self {
            verify: false,
            ..Self::new(cassette)
        }
    }

    pub fn consumed(&self) -> usize {
        *self.cursor.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.consumed()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().unwrap();
        let entry = self
            .entries
            .get(*cursor)
            .ok_or(BackendError::ScriptExhausted { consumed: *cursor })?;
        if self.verify {
            let found = request.fingerprint();
            if found != entry.request_fingerprint {
                return Err(BackendError::CassetteDrift {
                    index: *cursor,
                    expected: entry.request_fingerprint.clone(),
                    found,
                });
            }
        }
        *cursor += 1;
        super::check_count(request, entry.completions.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::params::GenerationParams;

    fn req(content: &str) -> ChatRequest {
        let params = GenerationParams {
            temperature: 0.0,
            max_tokens: 10,
            top_p: 1.0,
            frequency_penalty: 0.0,
            num_completions: 2,
            turn_budget: None,
        };
        ChatRequest::single_user("m", PromptId::QaFinal, content, params)
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let rec = RecordingBackend::create(ScriptedBackend::new([vec!["a\n", " b"], vec!["c", "d"]]), &path).unwrap();
        let first = rec.complete(&req("one")).unwrap();
        let second = rec.complete(&req("two")).unwrap();
        drop(rec);

        let replay = ReplayBackend::open(&path).unwrap();
        assert_eq!(replay.complete(&req("one")).unwrap(), first);
        assert_eq!(replay.complete(&req("two")).unwrap(), second);
        assert!(matches!(
            replay.complete(&req("three")),
            Err(BackendError::ScriptExhausted { consumed: 2 })
        ));
    }

    #[test]
    fn altered_request_is_drift() {
        let cassette = Cassette {
            entries: vec![CassetteEntry::new(&req("one"), vec!["a".into(), "b".into()])],
        };
        let replay = ReplayBackend::new(cassette.clone());
        assert!(matches!(
            replay.complete(&req("one!")),
            Err(BackendError::CassetteDrift { index: 0, .. })
        ));
        // drift does not advance the cursor
        assert_eq!(replay.consumed(), 0);
        assert!(ReplayBackend::unchecked(cassette).complete(&req("one!")).is_ok());
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let res = RecordingBackend::create(ScriptedBackend::default(), dir.path().join("missing/c.jsonl"));
        assert!(matches!(res, Err(BackendError::CassetteIo { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cassette = Cassette {
            entries: vec![CassetteEntry::new(&req("x"), vec!["1".into(), "2".into()])],
        };
        cassette.save(&path).unwrap();
        assert_eq!(Cassette::load(&path).unwrap(), cassette);
    }
}
