//! Per-item records written as the last event of every run log.

use dera::datasets::{StructuredSummary, Validate};
use dera::{CorruptionLevel, Termination};
use serde::{Deserialize, Serialize};

use crate::config::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub task: Task,
    pub run_id: String,
    pub item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Detail>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    LongForm {
        terminated_by: Termination,
        messages: usize,
        scratchpad: usize,
        initial_output: String,
        final_output: String,
    },
    Qa {
        votes: String,
        single_shot_answer: String,
        final_answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_letter: Option<String>,
        gold: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exact_match: Option<bool>,
        /// Judge score before batch clamping.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        similarity_raw: Option<f64>,
        correct: bool,
    },
    Repair {
        level: CorruptionLevel,
        initial_f1: f64,
        final_f1: f64,
        scratchpad: usize,
    },
    Score {
        recall: f64,
        precision: f64,
        f1: f64,
    },
}

/// One line of a `score` task input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    #[serde(default = "version")]
    pub format_version: u32,
    pub id: String,
    pub ground_truth: StructuredSummary,
    pub predicted: StructuredSummary,
}

fn version() -> u32 {
    dera::datasets::FORMAT_VERSION
}

impl Validate for ScorePair {
    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        Ok(())
    }

    fn format_version(&self) -> u32 {
        self.format_version
    }
}

/// File-name-safe form of an item id.
pub fn run_id(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| {
            p.chars()
                .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_ids_are_file_safe() {
        assert_eq!(run_id(&["enc 1/2", "low"]), "enc_1_2-low");
    }
}
