//! Corpora and document containers: encounters, structured summaries, care
//! plans and exam questions, plus question rewriting and splitting.
//!
//! Every on-disk record carries a top-level `format_version`; records
//! without one are read as the current version.

mod encounter;
mod question;
mod rewrite;
mod sections;

use std::io::BufRead;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use encounter::{corpus_stats, CorpusStats, DialogTurn, Encounter, Speaker, Spread};
pub use question::{sample_questions, split_by_area, ExamQuestion, Split, SplitError, SplitManifest, NEJM_DEV_AREAS};
pub use rewrite::{is_open_ended, split_sentences, RewriteError, RewriteMode, Rewriter, DEFAULT_CUES};
pub use sections::{CarePlan, CarePlanSection, SectionParseError, StructuredSummary, SummarySection};

pub const FORMAT_VERSION: u32 = 1;

pub(crate) fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Record-level checks that serde cannot express.
pub trait Validate {
    fn validate(&self) -> Result<(), String>;
    fn format_version(&self) -> u32;
}

pub fn parse_jsonl<T: DeserializeOwned + Validate>(input: impl BufRead) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::Record {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| IngestError::Record {
            line: line_no,
            reason: e.to_string(),
        })?;
        if record.format_version() != FORMAT_VERSION {
            return Err(IngestError::Record {
                line: line_no,
                reason: format!("unsupported format_version {}", record.format_version()),
            });
        }
        record
            .validate()
            .map_err(|reason| IngestError::Record { line: line_no, reason })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_jsonl<T: DeserializeOwned + Validate>(path: impl AsRef<Path>) -> Result<Vec<T>, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_jsonl(std::io::BufReader::new(file))
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn load_encounters(path: impl AsRef<Path>) -> Result<Vec<Encounter>, IngestError> {
    load_jsonl(path)
}

pub fn load_questions(path: impl AsRef<Path>) -> Result<Vec<ExamQuestion>, IngestError> {
    load_jsonl(path)
}
