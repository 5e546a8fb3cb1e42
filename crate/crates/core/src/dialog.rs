//! Transcript, decision and scratchpad values shared by the orchestrator,
//! the run log and the harness.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Who authored a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    AgentDecider,
    AgentResearcher,
    BackendUser,
    BackendAssistant,
}

impl Role {
    pub fn is_agent(self) -> bool {
        matches!(self, Role::AgentDecider | Role::AgentResearcher)
    }

    /// Speaker label used when a transcript is rendered into a prompt.
    pub fn label(self) -> &'static str {
        match self {
            Role::System => "System",
            Role::AgentDecider => "Decider",
            Role::AgentResearcher => "Researcher",
            Role::BackendUser => "User",
            Role::BackendAssistant => "Assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranscriptError {
    #[error("message content is empty")]
    EmptyContent,
    #[error("{0:?} cannot speak twice in a row")]
    RoleRepeated(Role),
}

/// Why a dialog stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResearcherDone,
    TurnBudget,
    Error,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::ResearcherDone => "researcher_done",
            Termination::TurnBudget => "turn_budget",
            Termination::Error => "error",
        })
    }
}

/// Ordered agent messages. Turn indices are assigned on push, so they are
/// strictly increasing by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogTranscript {
    messages: Vec<ChatMessage>,
    pub terminated_by: Option<Termination>,
}

impl DialogTranscript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a message. Agent roles must alternate: the same agent can
    /// never speak twice in a row.
    pub fn push(&mut self, role: Role, content: impl Into<String>) -> Result<&ChatMessage, TranscriptError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(TranscriptError::EmptyContent);
        }
        if role.is_agent() {
            if let Some(prev) = self.messages.iter().rev().find(|m| m.role.is_agent()) {
                if prev.role == role {
                    return Err(TranscriptError::RoleRepeated(role));
                }
            }
        }
        let turn_index = self.messages.len();
        self.messages.push(ChatMessage {
            role,
            content,
            turn_index,
        });
        Ok(&self.messages[turn_index])
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.messages.iter().filter(|m| m.role == role).count()
    }

    /// Plain-text rendering, one `Speaker: content` block per message.
    pub fn render(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("{}: {}", m.role.label(), m.content.trim()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Accept,
    Reject,
}

/// A Decider verdict on one Researcher suggestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeciderDecision {
    pub kind: DecisionKind,
    pub text: String,
}

impl DeciderDecision {
    /// Returns `None` when the text is blank.
    pub fn new(kind: DecisionKind, text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return None;
        }
        Some(Self {
            kind,
            text: trimmed.to_string(),
        })
    }

    pub fn accept(text: impl Into<String>) -> Self {
        Self::new(DecisionKind::Accept, text).expect("accepted suggestion must not be blank")
    }

    pub fn reject(text: impl Into<String>) -> Self {
        Self::new(DecisionKind::Reject, text).expect("rejection reason must not be blank")
    }

    pub fn is_accept(&self) -> bool {
        self.kind == DecisionKind::Accept
    }
}

/// Append-only memory of accepted suggestions.
///
/// Entries only enter through [`Scratchpad::append`], which takes a decision;
/// rejected decisions and byte-identical repeats of the last entry are
/// dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scratchpad {
    entries: Vec<String>,
}

impl Scratchpad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(mut self, decision: &DeciderDecision) -> Self {
        self.apply(decision);
        self
    }

    /// In-place form of [`Scratchpad::append`]; returns whether the pad grew.
    pub fn apply(&mut self, decision: &DeciderDecision) -> bool {
        if !decision.is_accept() {
            return false;
        }
        if self.entries.last().is_some_and(|last| *last == decision.text) {
            return false;
        }
        self.entries.push(decision.text.clone());
        true
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Numbered list, one entry per line.
    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "(empty)".to_string();
        }
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{}. {}", i + 1, e))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
