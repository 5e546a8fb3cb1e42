//! Chat-completions backends.
//!
//! Everything above this module talks to a [`ChatBackend`]. Three families
//! implement it: [`HttpBackend`] for a live endpoint, [`ScriptedBackend`] and
//! [`FnBackend`] for tests, and the cassette pair [`RecordingBackend`] /
//! [`ReplayBackend`] for byte-deterministic reruns.

mod cassette;
mod http;
mod scripted;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::params::GenerationParams;
use crate::prompts::PromptId;

pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, TokenBucket, API_KEY_ENV, BASE_URL_ENV, DEFAULT_BASE_URL};
pub use scripted::{FnBackend, ScriptedBackend};

pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: WireRole,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub params: GenerationParams,
    /// Which catalog prompt produced this request. Not sent on the wire but
    /// part of the cassette fingerprint.
    pub prompt_id: Option<PromptId>,
}

/// JSON body in the field order the endpoint documents.
#[derive(Debug, Serialize)]
struct WireBody<'a> {
    model: &'a str,
    messages: &'a [WireMessage],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    frequency_penalty: f64,
    n: u32,
}

#[derive(Serialize)]
struct Canonical<'a> {
    prompt_id: Option<PromptId>,
    body: WireBody<'a>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RequestError {
    #[error("request has no messages")]
    NoMessages,
    #[error(transparent)]
    Params(#[from] crate::params::ParamsError),
}

impl ChatRequest {
    /// A single user message carrying a rendered prompt.
    pub fn single_user(model: impl Into<String>, prompt_id: PromptId, rendered: impl Into<String>, params: GenerationParams) -> Self {
        Self {
            model: model.into(),
            messages: vec![WireMessage {
                role: WireRole::User,
                content: rendered.into(),
            }],
            params,
            prompt_id: Some(prompt_id),
        }
    }

    pub fn validate(&self) -> Result<(), RequestError> {
        if self.messages.is_empty() {
            return Err(RequestError::NoMessages);
        }
        self.params.validate()?;
        Ok(())
    }

    fn wire_body(&self) -> WireBody<'_> {
        WireBody {
            model: &self.model,
            messages: &self.messages,
            temperature: self.params.temperature,
            top_p: self.params.top_p,
            max_tokens: self.params.max_tokens,
            frequency_penalty: self.params.frequency_penalty,
            n: self.params.num_completions,
        }
    }

    /// Compact JSON body sent to `/v1/chat/completions`.
    pub fn to_wire_json(&self) -> String {
        serde_json::to_string(&self.wire_body()).expect("wire body serializes")
    }

    /// SHA-256 over the wire body plus prompt id; message content is hashed
    /// byte-for-byte.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(&Canonical {
            prompt_id: self.prompt_id,
            body: self.wire_body(),
        })
        .expect("canonical request serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Concatenated message content, mostly useful to scripted backends.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(#[from] RequestError),
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("expected {expected} completions, got {got}")]
    CompletionCount { expected: u32, got: usize },
    #[error("cassette drift at entry {index}: expected fingerprint {expected}, request has {found}")]
    CassetteDrift {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("script exhausted after {consumed} responses")]
    ScriptExhausted { consumed: usize },
    #[error("cassette i/o error on {path}: {message}")]
    CassetteIo { path: String, message: String },
}

pub trait ChatBackend: Send + Sync {
    /// Returns exactly `request.params.num_completions` completions.
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        (**self).complete(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Box<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        (**self).complete(request)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        (**self).complete(request)
    }
}

fn check_count(request: &ChatRequest, completions: Vec<String>) -> Result<Vec<String>, BackendError> {
    let expected = request.params.num_completions;
    if completions.len() != expected as usize {
        return Err(BackendError::CompletionCount {
            expected,
            got: completions.len(),
        });
    }
    Ok(completions)
}
