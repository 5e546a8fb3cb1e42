//! Per-run event log, written as JSON lines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::client::Call;
use crate::dialog::{DeciderDecision, Scratchpad};
use crate::prompts::PromptId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Initial,
    Researcher,
    Decider,
    Final,
    SingleShot,
    DeciderInitial,
    Corruption,
    Judge,
    Result,
    Error,
    /// Written once per item by batch runners.
    Item,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub run_id: String,
    pub seq: usize,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<PromptId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendered_prompt: Option<String>,
    #[serde(default)]
    pub completions: Vec<String>,
    #[serde(default)]
    pub decisions: Vec<DeciderDecision>,
    #[serde(default)]
    pub scratchpad_snapshot: Vec<String>,
    /// Milliseconds spent in the backend call; omitted for timing-free logs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<u64>,
    /// Task-specific payload on `result` and `error` events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<serde_json::Value>,
}

/// Ordered events for one run. Timing is off by default so that replayed
/// runs produce byte-identical logs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    run_id: String,
    events: Vec<RunEvent>,
    timed: bool,
}

impl RunLog {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            events: Vec::new(),
            timed: false,
        }
    }

    pub fn timed(mut self, timed: bool) -> Self {
        self.timed = timed;
        self
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn events(&self) -> &[RunEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<RunEvent> {
        self.events
    }

    pub(crate) fn start(&self) -> Option<Instant> {
        self.timed.then(Instant::now)
    }

    fn blank(&self, stage: Stage) -> RunEvent {
        RunEvent {
            run_id: self.run_id.clone(),
            seq: self.events.len(),
            stage,
            prompt_id: None,
            rendered_prompt: None,
            completions: Vec::new(),
            decisions: Vec::new(),
            scratchpad_snapshot: Vec::new(),
            wall_time: None,
            outcome: None,
        }
    }

    pub fn record_call(
        &mut self,
        stage: Stage,
        call: &Call,
        decisions: &[DeciderDecision],
        pad: Option<&Scratchpad>,
        started: Option<Instant>,
    ) {
        let mut event = self.blank(stage);
        event.prompt_id = Some(call.prompt_id);
        event.rendered_prompt = Some(call.rendered.clone());
        event.completions = call.completions.clone();
        event.decisions = decisions.to_vec();
        event.scratchpad_snapshot = pad.map(|p| p.entries().to_vec()).unwrap_or_default();
        event.wall_time = started.map(|s| s.elapsed().as_millis() as u64);
        self.events.push(event);
    }

    pub fn record_outcome(&mut self, stage: Stage, outcome: serde_json::Value) {
        let mut event = self.blank(stage);
        event.outcome = Some(outcome);
        self.events.push(event);
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("run event serializes") + "\n")
            .collect()
    }
}
