//! Turning multiple-choice stems into open-ended questions.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ExamQuestion;
use crate::client::{CallError, PromptClient};
use crate::prompts::{vars, PromptId};

/// Phrases that mark a stem as needing a rewrite.
pub const DEFAULT_CUES: [&str; 2] = ["Which of the following", "Which one of the following"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteMode {
    LastSentence,
    Full,
}

impl FromStr for RewriteMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last_sentence" => Ok(RewriteMode::LastSentence),
            "full" => Ok(RewriteMode::Full),
            other => Err(format!("unknown rewrite mode `{other}` (expected last_sentence or full)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("question {id}: rewrite changed text before the final sentence")]
    RewriteDriftError { id: String, expected_prefix: String, got_prefix: String },
    #[error("question {0}: empty stem")]
    EmptyStem(String),
    #[error(transparent)]
    Call(#[from] CallError),
}

/// Sentence spans covering `text` exactly; each span keeps its trailing
/// whitespace. A boundary is `.`, `?` or `!` followed by whitespace, outside
/// any parentheses.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut depth = 0usize;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '(' | '[' => depth += 1,
            ')' | ']' => depth = depth.saturating_sub(1),
            '.' | '?' | '!' if depth == 0 && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, n)) = chars.peek() {
                    if !n.is_whitespace() {
                        break;
                    }
                    end = j + n.len_utf8();
                    chars.next();
                }
                spans.push(&text[start..end]);
                start = end;
            }
            _ => {}
        }
    }
    if start < text.len() {
        spans.push(&text[start..]);
    }
    spans
}

/// Everything before the final sentence, byte for byte.
fn head_before_last(text: &str) -> &str {
    let spans = split_sentences(text);
    match spans.split_last() {
        Some((last, _)) => &text[..text.len() - last.len()],
        None => "",
    }
}

pub fn is_open_ended(stem: &str, cues: &[String]) -> bool {
    let lower = stem.to_lowercase();
    !cues.iter().any(|cue| lower.contains(&cue.to_lowercase()))
}

pub struct Rewriter {
    client: PromptClient,
    cues: Vec<String>,
}

impl Rewriter {
    pub fn new(client: PromptClient) -> Self {
        Self {
            client,
            cues: DEFAULT_CUES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_cues(mut self, cues: Vec<String>) -> Self {
        self.cues = cues;
        self
    }

    /// Returns a copy with `open_ended_stem` set. Stems without a cue phrase
    /// pass through without a backend call.
    pub fn rewrite(&self, question: &ExamQuestion, mode: RewriteMode) -> Result<ExamQuestion, RewriteError> {
        let stem = question.stem.trim();
        if stem.is_empty() {
            return Err(RewriteError::EmptyStem(question.id.clone()));
        }
        let mut out = question.clone();
        if is_open_ended(stem, &self.cues) {
            out.open_ended_stem = Some(stem.to_string());
            return Ok(out);
        }
        let id = match mode {
            RewriteMode::LastSentence => PromptId::RewriteLast,
            RewriteMode::Full => PromptId::RewriteFull,
        };
        let call = self.client.call(id, &vars([("question", stem)]))?;
        let rewritten = call.first().trim().to_string();
        if mode == RewriteMode::LastSentence {
            let expected = head_before_last(stem);
            let got = head_before_last(&rewritten);
            if expected != got {
                return Err(RewriteError::RewriteDriftError {
                    id: question.id.clone(),
                    expected_prefix: expected.to_string(),
                    got_prefix: got.to_string(),
                });
            }
        }
        out.open_ended_stem = Some(rewritten);
        Ok(out)
    }
}
