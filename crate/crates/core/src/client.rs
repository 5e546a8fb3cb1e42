//! Renders a catalog prompt, sends it with its bound parameters and hands
//! back everything the run log needs.

use std::sync::Arc;

use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest};
use crate::params::ParamsOverride;
use crate::prompts::{PromptError, PromptId, PromptRegistry, Vars};

pub const DEFAULT_MODEL: &str = "gpt-4";

#[derive(Debug, Error)]
pub enum CallError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One prompt round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub prompt_id: PromptId,
    pub rendered: String,
    pub completions: Vec<String>,
}

impl Call {
    pub fn first(&self) -> &str {
        &self.completions[0]
    }
}

#[derive(Clone)]
pub struct PromptClient {
    backend: Arc<dyn ChatBackend>,
    registry: Arc<PromptRegistry>,
    model: String,
    overrides: ParamsOverride,
}

impl PromptClient {
    pub fn new(backend: Arc<dyn ChatBackend>, registry: Arc<PromptRegistry>) -> Self {
        Self {
            backend,
            registry,
            model: DEFAULT_MODEL.to_string(),
            overrides: ParamsOverride::default(),
        }
    }

    /// Built-in prompt catalog over the given backend.
    pub fn with_builtin_prompts(backend: impl ChatBackend + 'static) -> Self {
        Self::new(Arc::new(backend), Arc::new(PromptRegistry::builtin()))
    }

    pub fn model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn overrides(mut self, overrides: ParamsOverride) -> Self {
        self.overrides = overrides;
        self
    }

    pub fn registry(&self) -> &PromptRegistry {
        &self.registry
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }

    pub fn request(&self, id: PromptId, vars: &Vars) -> Result<ChatRequest, PromptError> {
        let rendered = self.registry.render(id, vars)?;
        let params = self.registry.params_for(id)?.with_overrides(&self.overrides);
        Ok(ChatRequest::single_user(self.model.clone(), id, rendered, params))
    }

    pub fn call(&self, id: PromptId, vars: &Vars) -> Result<Call, CallError> {
        let request = self.request(id, vars)?;
        self.send(request)
    }

    /// Sends a request built by [`PromptClient::request`].
    pub fn send(&self, request: ChatRequest) -> Result<Call, CallError> {
        let completions = self.backend.complete(&request)?;
        let prompt_id = request.prompt_id.expect("catalog requests carry a prompt id");
        let rendered = request.messages.into_iter().next().map(|m| m.content).unwrap_or_default();
        Ok(Call {
            prompt_id,
            rendered,
            completions,
        })
    }
}

impl std::fmt::Debug for PromptClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromptClient")
            .field("model", &self.model)
            .field("overrides", &self.overrides)
            .finish_non_exhaustive()
    }
}
