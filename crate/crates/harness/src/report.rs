//! Aggregate reports over run logs. The text and JSON views are rendered
//! from the same values, so they agree field for field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dera::metrics::clamp_similarity_batch;
use dera::orchestrator::{RunEvent, Stage};
use dera::CorruptionLevel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Task;
use crate::item::{Detail, ItemRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("{file}:{line}: {message}")]
    Line { file: String, line: usize, message: String },
    #[error("{file}: no item record")]
    MissingItem { file: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tasks: Vec<TaskReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: Task,
    pub items: usize,
    pub failed: usize,
    pub body: TaskBody,
    pub failures: Vec<FailureRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub run_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskBody {
    LongForm { rows: Vec<LongFormRow> },
    Qa { rows: Vec<QaRow>, accuracy: f64, mean_similarity: Option<f64> },
    Repair { levels: Vec<LevelRow> },
    Score { rows: Vec<ScoreRow>, mean_f1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongFormRow {
    pub run_id: String,
    pub terminated_by: String,
    pub messages: usize,
    pub scratchpad: usize,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRow {
    pub run_id: String,
    pub votes: String,
    pub single_shot_answer: String,
    pub final_answer: String,
    pub gold: String,
    pub exact_match: Option<bool>,
    /// After batch clamping.
    pub similarity: Option<f64>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: CorruptionLevel,
    pub items: usize,
    pub mean_initial_f1: f64,
    pub mean_final_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub run_id: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Item record of one run log: the last `item` event.
pub fn parse_log(file: &str, text: &str) -> Result<ItemRecord, ReportError> {
    let mut record = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ReportError::Line {
            file: file.to_string(),
            line: i + 1,
            message,
        };
        let event: RunEvent = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if event.stage == Stage::Item {
            let outcome = event.outcome.ok_or_else(|| bad("item event without outcome".into()))?;
            record = Some(serde_json::from_value::<ItemRecord>(outcome).map_err(|e| bad(e.to_string()))?);
        }
    }
    record.ok_or_else(|| ReportError::MissingItem { file: file.to_string() })
}

pub fn report_files(files: &[PathBuf]) -> Result<Report, ReportError> {
    let records = files
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(f).map_err(|e| ReportError::Io {
                path: f.display().to_string(),
                message: e.to_string(),
            })?;
            parse_log(&f.display().to_string(), &text)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(build(records))
}

/// Every `*.jsonl` file in `dir`.
pub fn report_dir(dir: &Path) -> Result<Report, ReportError> {
    let io = |e: std::io::Error| ReportError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            files.push(path);
        }
    }
    report_files(&files)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups records per task; rows are ordered by run id.
pub fn build(mut records: Vec<ItemRecord>) -> Report {
    records.sort_by(|a, b| (a.task, &a.run_id).cmp(&(b.task, &b.run_id)));
    let mut by_task: BTreeMap<Task, Vec<ItemRecord>> = BTreeMap::new();
    for r in records {
        by_task.entry(r.task).or_default().push(r);
    }
    let tasks = by_task
        .into_iter()
        .map(|(task, records)| {
            let failures: Vec<FailureRow> = records
                .iter()
                .filter_map(|r| {
                    r.error.as_ref().map(|e| FailureRow {
                        run_id: r.run_id.clone(),
                        error: e.clone(),
                    })
                })
                .collect();
            let ok: Vec<(&str, &Detail)> = records
                .iter()
                .filter_map(|r| r.detail.as_ref().map(|d| (r.run_id.as_str(), d)))
                .collect();
            TaskReport {
                task,
                items: records.len(),
                failed: failures.len(),
                body: body(task, &ok),
                failures,
            }
        })
        .collect();
    Report { tasks }
}

fn body(task: Task, ok: &[(&str, &Detail)]) -> TaskBody {
    match task {
        Task::Summarize | Task::Careplan => TaskBody::LongForm {
            rows: ok
                .iter()
                .filter_map(|(id, d)| match d {
                    Detail::LongForm {
                        terminated_by,
                        messages,
                        scratchpad,
                        initial_output,
                        final_output,
                    } => Some(LongFormRow {
                        run_id: id.to_string(),
                        terminated_by: terminated_by.to_string(),
                        messages: *messages,
                        scratchpad: *scratchpad,
                        changed: initial_output != final_output,
                    }),
                    _ => None,
                })
                .collect(),
        },
        Task::QaOpen | Task::QaMc => {
            let mut rows: Vec<QaRow> = Vec::new();
            let mut raw = Vec::new();
            for (id, d) in ok {
                if let Detail::Qa {
                    votes,
                    single_shot_answer,
                    final_answer,
                    gold,
                    exact_match,
                    similarity_raw,
                    correct,
                    ..
                } = d
                {
                    if let Some(s) = similarity_raw {
                        raw.push(*s);
                    }
                    rows.push(QaRow {
                        run_id: id.to_string(),
                        votes: votes.clone(),
                        single_shot_answer: single_shot_answer.clone(),
                        final_answer: final_answer.clone(),
                        gold: gold.clone(),
                        exact_match: *exact_match,
                        similarity: *similarity_raw,
                        correct: *correct,
                    });
                }
            }
            let mut clamped = clamp_similarity_batch(&raw).into_iter();
            for row in rows.iter_mut().filter(|r| r.similarity.is_some()) {
                row.similarity = clamped.next();
            }
            let accuracy = mean(rows.iter().map(|r| if r.correct { 1.0 } else { 0.0 })).unwrap_or(0.0);
            let mean_similarity = mean(rows.iter().filter_map(|r| r.similarity));
            TaskBody::Qa {
                rows,
                accuracy,
                mean_similarity,
            }
        }
        Task::CorruptAndRepair => {
            let mut per_level: BTreeMap<CorruptionLevel, Vec<(f64, f64)>> = BTreeMap::new();
            for (_, d) in ok {
                if let Detail::Repair {
                    level,
                    initial_f1,
                    final_f1,
                    ..
                } = d
                {
                    per_level.entry(*level).or_default().push((*initial_f1, *final_f1));
                }
            }
            TaskBody::Repair {
                levels: per_level
                    .into_iter()
                    .map(|(level, v)| LevelRow {
                        level,
                        items: v.len(),
                        mean_initial_f1: mean(v.iter().map(|p| p.0)).unwrap_or(0.0),
                        mean_final_f1: mean(v.iter().map(|p| p.1)).unwrap_or(0.0),
                    })
                    .collect(),
            }
        }
        Task::Score => {
            let rows: Vec<ScoreRow> = ok
                .iter()
                .filter_map(|(id, d)| match d {
                    Detail::Score { recall, precision, f1 } => Some(ScoreRow {
                        run_id: id.to_string(),
                        recall: *recall,
                        precision: *precision,
                        f1: *f1,
                    }),
                    _ => None,
                })
                .collect();
            let mean_f1 = mean(rows.iter().map(|r| r.f1)).unwrap_or(0.0);
            TaskBody::Score { rows, mean_f1 }
        }
    }
}

/// Numbers print exactly as in the JSON view.
fn num(v: f64) -> String {
    serde_json::to_string(&v).expect("finite number")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".to_string())
}

pub const HEADER: &str = "# dera report\n";

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        for t in &self.tasks {
            let _ = write!(out, "\n## {} (items {}, failed {})\n", t.task, t.items, t.failed);
            match &t.body {
                TaskBody::LongForm { rows } => {
                    out.push_str("run_id\tterminated_by\tmessages\tscratchpad\tchanged\n");
                    for r in rows {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\t{}\t{}",
                            r.run_id, r.terminated_by, r.messages, r.scratchpad, r.changed
                        );
                    }
                }
                TaskBody::Qa {
                    rows,
                    accuracy,
                    mean_similarity,
                } => {
                    out.push_str("run_id\tvotes\tsingle_shot_answer\tfinal_answer\tgold\texact_match\tsimilarity\tcorrect\n");
                    for r in rows {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                            r.run_id,
                            r.votes.replace('\n', "; "),
                            r.single_shot_answer,
                            r.final_answer,
                            r.gold,
                            opt(r.exact_match),
                            opt(r.similarity.map(num)),
                            r.correct
                        );
                    }
                    let _ = writeln!(out, "accuracy\t{}", num(*accuracy));
                    let _ = writeln!(out, "mean_similarity\t{}", opt(mean_similarity.map(num)));
                }
                TaskBody::Repair { levels } => {
                    out.push_str("level\titems\tmean_initial_f1\tmean_final_f1\n");
                    for l in levels {
                        let _ = writeln!(
                            out,
                            "{}\t{}\t{}\t{}",
                            l.level,
                            l.items,
                            num(l.mean_initial_f1),
                            num(l.mean_final_f1)
                        );
                    }
                }
                TaskBody::Score { rows, mean_f1 } => {
                    out.push_str("run_id\trecall\tprecision\tf1\n");
                    for r in rows {
                        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.run_id, num(r.recall), num(r.precision), num(r.f1));
                    }
                    let _ = writeln!(out, "mean_f1\t{}", num(*mean_f1));
                }
            }
            if !t.failures.is_empty() {
                out.push_str("failures\n");
                for f in &t.failures {
                    let _ = writeln!(out, "{}\t{}", f.run_id, f.error.replace('\n', " "));
                }
            }
        }
        out
    }

    /// Writes `report.txt` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), ReportError> {
        for (name, body) in [("report.txt", self.to_text()), ("report.json", self.to_json())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| ReportError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }
}
