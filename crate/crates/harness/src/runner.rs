//! Batch execution: one run log per item, then a report over those logs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use dera::backend::{
    BackendError, Cassette, ChatBackend, HttpBackend, HttpConfig, RecordingBackend, ReplayBackend, TokenBucket,
};
use dera::client::PromptClient;
use dera::corruption::{corrupt, CorruptionJob};
use dera::datasets::{load_encounters, load_jsonl, load_questions, Encounter, ExamQuestion, StructuredSummary};
use dera::metrics::Scorer;
use dera::orchestrator::{Dera, LongFormTask, QaMode, RunLog, Stage};
use dera::prompts::{vars, PromptId};
use dera::CorruptionLevel;
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, ExperimentConfig, Task};
use crate::item::{run_id, Detail, ItemRecord, ScorePair};
use crate::report::{report_files, Report, ReportError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("input {path}: {message}")]
    Input { path: String, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Report(#[from] ReportError),
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub items: usize,
    pub failures: usize,
    pub log_dir: PathBuf,
    pub report: Report,
}

impl RunSummary {
    pub fn failure_ratio(&self) -> f64 {
        if self.items == 0 {
            0.0
        } else {
            self.failures as f64 / self.items as f64
        }
    }

    pub fn exceeds(&self, threshold: f64) -> bool {
        self.failure_ratio() > threshold
    }
}

/// Backend named by the config. Live calls read the API key and base URL
/// from the environment.
pub fn build_backend(config: &ExperimentConfig) -> Result<Arc<dyn ChatBackend>, RunError> {
    backend_for(config.backend, config.cassette.as_deref(), config.rate_limit)
}

pub fn backend_for(
    kind: BackendKind,
    cassette: Option<&Path>,
    rate_limit: Option<u32>,
) -> Result<Arc<dyn ChatBackend>, RunError> {
    let live = || {
        let mut http = HttpConfig::from_env();
        http.rate_limit = rate_limit.map(|rpm| Arc::new(TokenBucket::per_minute(rpm)));
        HttpBackend::new(http)
    };
    let cassette = || cassette.ok_or(ConfigError::CassetteRequired(kind));
    Ok(match kind {
        BackendKind::Live => Arc::new(live()),
        BackendKind::Record => Arc::new(RecordingBackend::create(live(), cassette()?)?),
        BackendKind::Replay => Arc::new(ReplayBackend::open(cassette()?)?),
        BackendKind::Scripted => Arc::new(ReplayBackend::unchecked(Cassette::load(cassette()?)?)),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    let items = load_items(config)?;
    let backend = build_backend(config)?;
    execute(config, items, backend)
}

/// Same as [`run_experiment`] over a caller-supplied backend.
pub fn run_with_backend(config: &ExperimentConfig, backend: Arc<dyn ChatBackend>) -> Result<RunSummary, RunError> {
    config.validate()?;
    let items = load_items(config)?;
    execute(config, items, backend)
}

enum Item {
    Encounter(Encounter),
    Repair(Encounter, CorruptionLevel),
    Question(ExamQuestion),
    Pair(ScorePair),
}

impl Item {
    fn ids(&self) -> (String, String) {
        match self {
            Item::Encounter(e) => (e.id.clone(), run_id(&[&e.id])),
            Item::Repair(e, level) => (e.id.clone(), run_id(&[&e.id, level.label()])),
            Item::Question(q) => (q.id.clone(), run_id(&[&q.id])),
            Item::Pair(p) => (p.id.clone(), run_id(&[&p.id])),
        }
    }
}

fn load_items(config: &ExperimentConfig) -> Result<Vec<Item>, RunError> {
    let input_err = |e: dera::datasets::IngestError| RunError::Input {
        path: config.input.display().to_string(),
        message: e.to_string(),
    };
    let items: Vec<Item> = match config.task {
        Task::Summarize | Task::Careplan => load_encounters(&config.input)
            .map_err(input_err)?
            .into_iter()
            .map(Item::Encounter)
            .collect(),
        Task::CorruptAndRepair => {
            let encounters = load_encounters(&config.input).map_err(input_err)?;
            config
                .levels
                .iter()
                .flat_map(|&level| encounters.iter().map(move |e| Item::Repair(e.clone(), level)))
                .collect()
        }
        Task::QaOpen | Task::QaMc => load_questions(&config.input)
            .map_err(input_err)?
            .into_iter()
            .map(Item::Question)
            .collect(),
        Task::Score => load_jsonl::<ScorePair>(&config.input)
            .map_err(input_err)?
            .into_iter()
            .map(Item::Pair)
            .collect(),
    };
    let mut seen = HashSet::new();
    for item in &items {
        let (_, rid) = item.ids();
        if !seen.insert(rid.clone()) {
            return Err(RunError::Input {
                path: config.input.display().to_string(),
                message: format!("duplicate item id `{rid}`"),
            });
        }
    }
    Ok(items)
}

fn execute(config: &ExperimentConfig, items: Vec<Item>, backend: Arc<dyn ChatBackend>) -> Result<RunSummary, RunError> {
    let log_dir = config.output.join("logs");
    std::fs::create_dir_all(&log_dir).map_err(|e| io_err(&log_dir, e))?;
    let client = PromptClient::new(backend, Arc::new(dera::prompts::PromptRegistry::builtin()))
        .model(config.model.clone())
        .overrides(config.overrides);
    let ctx = Ctx {
        config,
        dera: Dera::new(client.clone()),
        scorer: Scorer::new(client.clone()),
        client,
    };

    let next = AtomicUsize::new(0);
    let written: Mutex<Vec<Option<Result<PathBuf, RunError>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    let workers = config.effective_parallelism().min(items.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                let result = ctx.run_item(item, &log_dir);
                written.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut files = Vec::new();
    for slot in written.into_inner().unwrap() {
        files.push(slot.expect("every item ran")?);
    }
    let report = report_files(&files)?;
    let failures = report.tasks.iter().map(|t| t.failed).sum();
    report.write(&config.output)?;
    Ok(RunSummary {
        items: items.len(),
        failures,
        log_dir,
        report,
    })
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    client: PromptClient,
    dera: Dera,
    scorer: Scorer,
}

impl Ctx<'_> {
    /// Runs one item and writes its log. Item failures are recorded in the
    /// log; only I/O errors escape.
    fn run_item(&self, item: &Item, log_dir: &Path) -> Result<PathBuf, RunError> {
        let (item_id, rid) = item.ids();
        let mut log = RunLog::new(rid.clone()).timed(self.config.backend == BackendKind::Live);
        let outcome = match item {
            Item::Encounter(e) => self.longform(e, &mut log),
            Item::Repair(e, level) => self.repair(e, *level, &mut log),
            Item::Question(q) => self.qa(q, &mut log),
            Item::Pair(p) => self.score(p),
        };
        let (detail, error) = match outcome {
            Ok(d) => (Some(d), None),
            Err(e) => (None, Some(e)),
        };
        let record = ItemRecord {
            task: self.config.task,
            run_id: rid.clone(),
            item_id,
            error,
            detail,
        };
        log.record_outcome(Stage::Item, serde_json::to_value(&record).expect("item record serializes"));
        let path = log_dir.join(format!("{rid}.jsonl"));
        let tmp = log_dir.join(format!("{rid}.jsonl.partial"));
        std::fs::write(&tmp, log.to_jsonl()).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn longform(&self, e: &Encounter, log: &mut RunLog) -> Result<Detail, String> {
        let task = match self.config.task {
            Task::Careplan => LongFormTask::CarePlan,
            _ => LongFormTask::Summarization,
        };
        let out = self.dera.run_longform(task, &e.render(), log).map_err(|f| f.to_string())?;
        Ok(Detail::LongForm {
            terminated_by: out.terminated_by(),
            messages: out.transcript.len(),
            scratchpad: out.scratchpad.len(),
            initial_output: out.initial_output,
            final_output: out.final_output,
        })
    }

    fn reference(&self, e: &Encounter, log: &mut RunLog) -> Result<StructuredSummary, String> {
        if let Some(s) = &e.reference_summary {
            return Ok(s.clone());
        }
        let call = self
            .client
            .call(PromptId::SummInitial, &vars([("encounter", e.render())]))
            .map_err(|err| err.to_string())?;
        log.record_call(Stage::Initial, &call, &[], None, None);
        StructuredSummary::parse_text(call.first()).map_err(|err| format!("reference summary: {err}"))
    }

    fn repair(&self, e: &Encounter, level: CorruptionLevel, log: &mut RunLog) -> Result<Detail, String> {
        let truth = self.reference(e, log)?;
        let job = CorruptionJob {
            source_summary: truth.clone(),
            level,
            seed_note: format!("{} seed {}", e.id, self.config.seed),
        };
        let damaged = corrupt(&self.client, &job).map_err(|err| err.to_string())?;
        log.record_call(Stage::Corruption, &damaged.call, &[], None, None);
        let out = self
            .dera
            .refine(LongFormTask::Summarization, &e.render(), damaged.summary.to_text(), log)
            .map_err(|f| f.to_string())?;
        let repaired = StructuredSummary::parse_text(&out.final_output).map_err(|err| format!("final summary: {err}"))?;
        let f1 = |pred: &StructuredSummary| {
            self.scorer
                .gpt_f1_summary(&truth, pred)
                .map(|r| r.overall.f1)
                .map_err(|err| err.to_string())
        };
        Ok(Detail::Repair {
            level,
            initial_f1: f1(&damaged.summary)?,
            final_f1: f1(&repaired)?,
            scratchpad: out.scratchpad.len(),
        })
    }

    fn qa(&self, q: &ExamQuestion, log: &mut RunLog) -> Result<Detail, String> {
        let mode = match self.config.task {
            Task::QaMc => QaMode::MultipleChoice,
            _ => QaMode::OpenEnded,
        };
        let out = self.dera.run_qa(q, mode, log).map_err(|f| f.to_string())?;
        let votes = out.tally.render_percentages();
        match mode {
            QaMode::MultipleChoice => {
                let correct = out.final_letter.is_some() && out.final_letter == q.gold_letter;
                Ok(Detail::Qa {
                    votes,
                    single_shot_answer: out.single_shot_answer,
                    final_answer: out.final_answer,
                    final_letter: out.final_letter,
                    gold: q.gold_letter.clone().unwrap_or_default(),
                    exact_match: None,
                    similarity_raw: None,
                    correct,
                })
            }
            QaMode::OpenEnded => {
                let exact = self
                    .scorer
                    .exact_match_judge(&out.final_answer, &q.gold_text)
                    .map_err(|err| err.to_string())?;
                let similarity = self
                    .scorer
                    .similarity_raw(&out.final_answer, &q.gold_text)
                    .map_err(|err| err.to_string())?;
                let outcome = serde_json::json!({
                    "exact_match": exact.matched,
                    "explanation": exact.explanation,
                    "similarity_raw": similarity,
                });
                log.record_outcome(Stage::Judge, outcome);
                Ok(Detail::Qa {
                    votes,
                    single_shot_answer: out.single_shot_answer,
                    final_answer: out.final_answer,
                    final_letter: None,
                    gold: q.gold_text.clone(),
                    exact_match: Some(exact.matched),
                    similarity_raw: Some(similarity),
                    correct: exact.matched,
                })
            }
        }
    }

    fn score(&self, p: &ScorePair) -> Result<Detail, String> {
        let r = self
            .scorer
            .gpt_f1_summary(&p.ground_truth, &p.predicted)
            .map_err(|err| err.to_string())?;
        Ok(Detail::Score {
            recall: r.overall.recall,
            precision: r.overall.precision,
            f1: r.overall.f1,
        })
    }
}
