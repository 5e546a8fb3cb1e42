use std::collections::VecDeque;
use std::sync::Mutex;

use super::{check_count, BackendError, ChatBackend, ChatRequest};

/// Replies from a fixed queue, one entry per call, and keeps every request
/// it saw for later inspection.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Vec<String>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new<I, R, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(
                replies
                    .into_iter()
                    .map(|r| r.into_iter().map(Into::into).collect())
                    .collect(),
            ),
            seen: Mutex::default(),
        }
    }

    pub fn push(&self, reply: Vec<String>) {
        self.queue.lock().unwrap().push_back(reply);
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }

    pub fn calls(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        let mut seen = self.seen.lock().unwrap();
        let reply = self
            .queue
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(BackendError::ScriptExhausted { consumed: seen.len() })?;
        seen.push(request.clone());
        check_count(request, reply)
    }
}

/// Computes each reply from the request.
pub struct FnBackend<F> {
    respond: F,
    calls: Mutex<usize>,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<Vec<String>, BackendError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self {
            respond,
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<Vec<String>, BackendError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        *self.calls.lock().unwrap() += 1;
        check_count(request, (self.respond)(request)?)
    }
}
