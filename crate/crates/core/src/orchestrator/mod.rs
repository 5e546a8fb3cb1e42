//! The Researcher/Decider loop for long-form text and the voting-plus-dialog
//! pipeline for exam questions.

mod log;
mod longform;
mod parse;
mod qa;

use thiserror::Error;

use crate::client::{CallError, PromptClient};
use crate::dialog::{DialogTranscript, Scratchpad, TranscriptError};
use crate::prompts::PromptId;
use crate::vote::EmptyBallot;

pub use log::{RunEvent, RunLog, Stage};
pub use longform::{LongFormResult, LongFormTask};
pub use parse::{choice_letter, is_done, parse_answer_line, parse_decider_reply, UnparseableDecision, DONE_SENTINEL};
pub use qa::{question_text, QaMode, QaResult};

#[derive(Debug, Error)]
pub enum DeraError {
    #[error(transparent)]
    Call(#[from] CallError),
    #[error("decider reply has no ACCEPT/REJECT line after retry: {reply:?}")]
    UnparseableDecision { reply: String },
    #[error("{0} returned an empty reply")]
    EmptyReply(PromptId),
    #[error("multiple-choice mode needs answer options")]
    MissingOptions,
    #[error("final answer `{0}` is not one of the option letters")]
    InvalidChoiceLetter(String),
    #[error("no completions to vote over")]
    EmptyBallot,
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

impl From<EmptyBallot> for DeraError {
    fn from(_: EmptyBallot) -> Self {
        DeraError::EmptyBallot
    }
}

/// A run that stopped early, with whatever it had built so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: DeraError,
    pub transcript: DialogTranscript,
    pub scratchpad: Scratchpad,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<DeraError> for RunFailure {
    fn from(error: DeraError) -> Self {
        RunFailure {
            error,
            transcript: DialogTranscript::new(),
            scratchpad: Scratchpad::new(),
        }
    }
}

/// Loop limits. Defaults come from the prompt catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DialogLimits {
    /// Agent messages in a long-form dialog, counting the opening draft.
    pub longform_turns: usize,
    /// Researcher turns in a question dialog.
    pub qa_researcher_turns: usize,
    /// Extra samples drawn when a Decider reply cannot be parsed.
    pub decision_retries: usize,
}

impl Default for DialogLimits {
    fn default() -> Self {
        Self {
            longform_turns: 15,
            qa_researcher_turns: 3,
            decision_retries: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dera {
    client: PromptClient,
    limits: DialogLimits,
}

impl Dera {
    /// Limits are taken from the `turn_budget` of the Decider and teacher
    /// prompts when present.
    pub fn new(client: PromptClient) -> Self {
        let mut limits = DialogLimits::default();
        let reg = client.registry();
        if let Some(tb) = reg.params_for(PromptId::SummDecider).ok().and_then(|p| p.turn_budget) {
            limits.longform_turns = tb as usize;
        }
        if let Some(tb) = reg.params_for(PromptId::QaTeacher).ok().and_then(|p| p.turn_budget) {
            limits.qa_researcher_turns = tb as usize;
        }
        Self { client, limits }
    }

    pub fn with_limits(mut self, limits: DialogLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn limits(&self) -> DialogLimits {
        self.limits
    }

    pub fn client(&self) -> &PromptClient {
        &self.client
    }
}

pub(crate) fn nonempty(id: PromptId, text: &str) -> Result<(), DeraError> {
    if text.trim().is_empty() {
        Err(DeraError::EmptyReply(id))
    } else {
        Ok(())
    }
}
