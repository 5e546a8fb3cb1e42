use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{choice_letter, is_done, nonempty, parse_answer_line, Dera, DeraError, RunFailure, RunLog, Stage};
use crate::datasets::ExamQuestion;
use crate::dialog::{DialogTranscript, Role, Scratchpad, Termination};
use crate::prompts::{vars, PromptId};
use crate::vote::VoteTally;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    OpenEnded,
    MultipleChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaResult {
    pub mode: QaMode,
    pub question_text: String,
    pub single_shot_completions: Vec<String>,
    pub tally: VoteTally,
    pub single_shot_answer: String,
    pub initial_decider_message: String,
    pub transcript: DialogTranscript,
    /// The `ANSWER:` line of each Decider reply after the opening one.
    pub answer_trace: Vec<Option<String>>,
    pub final_completions: Vec<String>,
    pub final_answer: String,
    /// Option letter of the final answer in multiple-choice mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_letter: Option<String>,
}

/// The question as the prompts see it. Multiple-choice mode lists the
/// options under the original stem.
pub fn question_text(question: &ExamQuestion, mode: QaMode) -> Result<String, DeraError> {
    match mode {
        QaMode::OpenEnded => Ok(question.prompt_stem().trim().to_string()),
        QaMode::MultipleChoice => {
            let options = question.options.as_ref().ok_or(DeraError::MissingOptions)?;
            Ok(with_options(question.stem.trim(), options))
        }
    }
}

fn with_options(stem: &str, options: &BTreeMap<String, String>) -> String {
    let mut out = format!("{stem}\n\nOptions:");
    for (letter, text) in options {
        out.push_str(&format!("\n{letter}. {text}"));
    }
    out.push_str("\n\nAnswer with the letter of the correct option only.");
    out
}

fn trimmed(completions: &[String]) -> Vec<String> {
    completions.iter().map(|c| c.trim().to_string()).collect()
}

impl Dera {
    /// The Decider's opening message: an explanation of the vote spread.
    pub fn initial_decider_message(&self, question: &str, tally: &VoteTally, log: &mut RunLog) -> Result<String, DeraError> {
        if tally.entries().is_empty() {
            return Err(DeraError::EmptyBallot);
        }
        let id = PromptId::QaStudentExp;
        let started = log.start();
        let call = self
            .client
            .call(id, &vars([("question", question), ("votes", tally.render_percentages().as_str())]))?;
        log.record_call(Stage::DeciderInitial, &call, &[], None, started);
        nonempty(id, call.first())?;
        Ok(call.first().to_string())
    }

    pub fn run_qa(&self, question: &ExamQuestion, mode: QaMode, log: &mut RunLog) -> Result<QaResult, RunFailure> {
        let mut transcript = DialogTranscript::new();
        match self.qa_inner(question, mode, log, &mut transcript) {
            Ok(result) => {
                log.record_outcome(
                    Stage::Result,
                    json!({
                        "single_shot_answer": result.single_shot_answer,
                        "final_answer": result.final_answer,
                        "final_letter": result.final_letter,
                        "terminated_by": result.transcript.terminated_by,
                    }),
                );
                Ok(result)
            }
            Err(error) => {
                log.record_outcome(Stage::Error, json!({ "error": error.to_string() }));
                transcript.terminated_by = Some(Termination::Error);
                Err(RunFailure {
                    error,
                    transcript,
                    scratchpad: Scratchpad::new(),
                })
            }
        }
    }

    fn qa_inner(
        &self,
        question: &ExamQuestion,
        mode: QaMode,
        log: &mut RunLog,
        transcript: &mut DialogTranscript,
    ) -> Result<QaResult, DeraError> {
        let text = question_text(question, mode)?;
        let q = text.as_str();

        let started = log.start();
        let shot = self.client.call(PromptId::QaSingleShot, &vars([("question", q)]))?;
        log.record_call(Stage::SingleShot, &shot, &[], None, started);
        let single_shot_completions = trimmed(&shot.completions);
        let tally = VoteTally::from_completions(&single_shot_completions)?;
        let single_shot_answer = tally.winner().to_string();

        let opening = self.initial_decider_message(q, &tally, log)?;
        transcript.push(Role::AgentDecider, opening.clone())?;

        let mut answer_trace = Vec::new();
        for _ in 0..self.limits.qa_researcher_turns {
            let conv = transcript.render();
            let started = log.start();
            let call = self
                .client
                .call(PromptId::QaTeacher, &vars([("question", q), ("conversation", conv.as_str())]))?;
            log.record_call(Stage::Researcher, &call, &[], None, started);
            let point = call.first().to_string();
            if is_done(&point) {
                transcript.terminated_by = Some(Termination::ResearcherDone);
                break;
            }
            nonempty(PromptId::QaTeacher, &point)?;
            transcript.push(Role::AgentResearcher, point)?;

            let conv = transcript.render();
            let started = log.start();
            let call = self
                .client
                .call(PromptId::QaStudent, &vars([("question", q), ("conversation", conv.as_str())]))?;
            log.record_call(Stage::Decider, &call, &[], None, started);
            let reply = call.first().to_string();
            nonempty(PromptId::QaStudent, &reply)?;
            answer_trace.push(parse_answer_line(&reply));
            transcript.push(Role::AgentDecider, reply)?;
        }
        if transcript.terminated_by.is_none() {
            transcript.terminated_by = Some(Termination::TurnBudget);
        }

        let conv = transcript.render();
        let started = log.start();
        let fin = self
            .client
            .call(PromptId::QaFinal, &vars([("question", q), ("conversation", conv.as_str())]))?;
        log.record_call(Stage::Final, &fin, &[], None, started);
        let final_completions = trimmed(&fin.completions);
        let final_answer = VoteTally::from_completions(&final_completions)?.winner().to_string();

        let final_letter = match mode {
            QaMode::OpenEnded => None,
            QaMode::MultipleChoice => {
                let options = question.options.as_ref().ok_or(DeraError::MissingOptions)?;
                Some(choice_letter(&final_answer, options).ok_or_else(|| DeraError::InvalidChoiceLetter(final_answer.clone()))?)
            }
        };

        Ok(QaResult {
            mode,
            question_text: text.clone(),
            single_shot_completions,
            tally,
            single_shot_answer,
            initial_decider_message: opening,
            transcript: transcript.clone(),
            answer_trace,
            final_completions,
            final_answer,
            final_letter,
        })
    }
}
