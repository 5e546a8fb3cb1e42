//! Prompt-mediated degradation of a reference summary for stress tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{Call, CallError, PromptClient};
use crate::datasets::{SectionParseError, StructuredSummary};
use crate::params::CorruptionLevel;
use crate::prompts::{vars, PromptId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionJob {
    pub source_summary: StructuredSummary,
    pub level: CorruptionLevel,
    /// Free text carried into logs.
    #[serde(default)]
    pub seed_note: String,
}

#[derive(Debug, Error)]
pub enum CorruptionError {
    #[error("source summary is empty")]
    EmptySource,
    #[error("corrupted summary could not be parsed: {source}")]
    CorruptionParseError {
        completion: String,
        #[source]
        source: SectionParseError,
    },
    #[error(transparent)]
    Call(#[from] CallError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corrupted {
    pub summary: StructuredSummary,
    pub call: Call,
}

pub fn corrupt(client: &PromptClient, job: &CorruptionJob) -> Result<Corrupted, CorruptionError> {
    if job.source_summary.is_empty() {
        return Err(CorruptionError::EmptySource);
    }
    let level = job.level.magnitude().to_string();
    let source = job.source_summary.to_text();
    let call = client.call(
        PromptId::SummCorruption,
        &vars([("summary", source.as_str()), ("level", level.as_str())]),
    )?;
    let summary = StructuredSummary::parse_text(call.first()).map_err(|source| CorruptionError::CorruptionParseError {
        completion: call.first().to_string(),
        source,
    })?;
    Ok(Corrupted { summary, call })
}
