use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{is_done, nonempty, parse_decider_reply, Dera, DeraError, RunFailure, RunLog, Stage};
use crate::client::Call;
use crate::dialog::{DeciderDecision, DialogTranscript, Role, Scratchpad, Termination};
use crate::prompts::{vars, PromptId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongFormTask {
    Summarization,
    CarePlan,
}

impl LongFormTask {
    pub fn initial_prompt(self) -> PromptId {
        match self {
            LongFormTask::Summarization => PromptId::SummInitial,
            LongFormTask::CarePlan => PromptId::CpInitial,
        }
    }

    pub fn researcher_prompt(self) -> PromptId {
        match self {
            LongFormTask::Summarization => PromptId::SummResearcher,
            LongFormTask::CarePlan => PromptId::CpResearcher,
        }
    }

    pub fn decider_prompt(self) -> PromptId {
        match self {
            LongFormTask::Summarization => PromptId::SummDecider,
            LongFormTask::CarePlan => PromptId::CpDecider,
        }
    }

    pub fn final_prompt(self) -> PromptId {
        match self {
            LongFormTask::Summarization => PromptId::SummFinal,
            LongFormTask::CarePlan => PromptId::CpFinal,
        }
    }

    /// Template variable holding the draft.
    pub fn draft_var(self) -> &'static str {
        match self {
            LongFormTask::Summarization => "summary",
            LongFormTask::CarePlan => "care_plan",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormResult {
    pub task: LongFormTask,
    pub initial_output: String,
    pub transcript: DialogTranscript,
    pub scratchpad: Scratchpad,
    pub final_output: String,
}

impl LongFormResult {
    pub fn terminated_by(&self) -> Termination {
        self.transcript.terminated_by.unwrap_or(Termination::TurnBudget)
    }
}

/// Messages after the opening draft, which the prompts carry separately.
fn conversation(transcript: &DialogTranscript) -> String {
    let rest = &transcript.messages()[1..];
    if rest.is_empty() {
        return "(no messages yet)".to_string();
    }
    rest.iter()
        .map(|m| format!("{}: {}", m.role.label(), m.content.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

struct Loop<'a> {
    dera: &'a Dera,
    task: LongFormTask,
    encounter: &'a str,
    initial: String,
    transcript: DialogTranscript,
    scratchpad: Scratchpad,
}

impl Loop<'_> {
    fn call(&self, id: PromptId, log: &mut RunLog) -> Result<(Call, Option<std::time::Instant>), DeraError> {
        let v = vars([
            ("encounter", self.encounter),
            (self.task.draft_var(), self.initial.as_str()),
            ("scratchpad", self.scratchpad.render().as_str()),
            ("conversation", conversation(&self.transcript).as_str()),
        ]);
        let started = log.start();
        Ok((self.dera.client.call(id, &v)?, started))
    }

    /// One Decider reply, resampled when it has no decision lines.
    fn decide(&mut self, log: &mut RunLog) -> Result<(String, Vec<DeciderDecision>), DeraError> {
        let id = self.task.decider_prompt();
        let mut attempt = 0;
        loop {
            let (call, started) = self.call(id, log)?;
            let reply = call.first().to_string();
            match parse_decider_reply(&reply) {
                Ok(decisions) => {
                    for d in &decisions {
                        self.scratchpad.apply(d);
                    }
                    log.record_call(Stage::Decider, &call, &decisions, Some(&self.scratchpad), started);
                    return Ok((reply, decisions));
                }
                Err(_) => {
                    log.record_call(Stage::Decider, &call, &[], Some(&self.scratchpad), started);
                    if attempt >= self.dera.limits.decision_retries {
                        return Err(DeraError::UnparseableDecision { reply });
                    }
                    attempt += 1;
                }
            }
        }
    }

    fn run(&mut self, log: &mut RunLog) -> Result<String, DeraError> {
        let budget = self.dera.limits.longform_turns;
        self.transcript.push(Role::AgentDecider, self.initial.clone())?;
        // Each round adds a Researcher and a Decider message.
        while self.transcript.len() + 2 <= budget {
            let (call, started) = self.call(self.task.researcher_prompt(), log)?;
            log.record_call(Stage::Researcher, &call, &[], Some(&self.scratchpad), started);
            let point = call.first().to_string();
            if is_done(&point) {
                self.transcript.terminated_by = Some(Termination::ResearcherDone);
                break;
            }
            nonempty(call.prompt_id, &point)?;
            self.transcript.push(Role::AgentResearcher, point)?;
            let (reply, _) = self.decide(log)?;
            self.transcript.push(Role::AgentDecider, reply)?;
        }
        if self.transcript.terminated_by.is_none() {
            self.transcript.terminated_by = Some(Termination::TurnBudget);
        }
        if self.scratchpad.is_empty() {
            return Ok(self.initial.clone());
        }
        // The rewrite sees only the draft and the accepted corrections.
        let id = self.task.final_prompt();
        let v = vars([
            (self.task.draft_var(), self.initial.as_str()),
            ("scratchpad", self.scratchpad.render().as_str()),
        ]);
        let started = log.start();
        let call = self.dera.client.call(id, &v)?;
        log.record_call(Stage::Final, &call, &[], Some(&self.scratchpad), started);
        Ok(call.first().to_string())
    }
}

impl Dera {
    /// Drafts with the task's initial prompt, then refines.
    pub fn run_longform(&self, task: LongFormTask, encounter: &str, log: &mut RunLog) -> Result<LongFormResult, RunFailure> {
        let id = task.initial_prompt();
        let started = log.start();
        let draft = self
            .client
            .call(id, &vars([("encounter", encounter)]))
            .map_err(DeraError::from)
            .and_then(|call| {
                log.record_call(Stage::Initial, &call, &[], None, started);
                nonempty(id, call.first())?;
                Ok(call.first().to_string())
            });
        match draft {
            Ok(draft) => self.refine(task, encounter, draft, log),
            Err(error) => {
                log.record_outcome(Stage::Error, json!({ "error": error.to_string() }));
                let mut transcript = DialogTranscript::new();
                transcript.terminated_by = Some(Termination::Error);
                Err(RunFailure {
                    error,
                    transcript,
                    scratchpad: Scratchpad::new(),
                })
            }
        }
    }

    /// Runs the dialog over a supplied draft.
    pub fn refine(
        &self,
        task: LongFormTask,
        encounter: &str,
        draft: impl Into<String>,
        log: &mut RunLog,
    ) -> Result<LongFormResult, RunFailure> {
        let mut lp = Loop {
            dera: self,
            task,
            encounter,
            initial: draft.into(),
            transcript: DialogTranscript::new(),
            scratchpad: Scratchpad::new(),
        };
        match lp.run(log) {
            Ok(final_output) => {
                log.record_outcome(
                    Stage::Result,
                    json!({
                        "terminated_by": lp.transcript.terminated_by,
                        "messages": lp.transcript.len(),
                        "final_output": final_output,
                    }),
                );
                Ok(LongFormResult {
                    task,
                    initial_output: lp.initial,
                    transcript: lp.transcript,
                    scratchpad: lp.scratchpad,
                    final_output,
                })
            }
            Err(error) => {
                log.record_outcome(Stage::Error, json!({ "error": error.to_string() }));
                lp.transcript.terminated_by = Some(Termination::Error);
                Err(RunFailure {
                    error,
                    transcript: lp.transcript,
                    scratchpad: lp.scratchpad,
                })
            }
        }
    }
}
