//! Experiment configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dera::client::DEFAULT_MODEL;
use dera::{CorruptionLevel, ParamsOverride};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("backend `{0}` needs a cassette path")]
    CassetteRequired(BackendKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Summarize,
    Careplan,
    QaOpen,
    QaMc,
    CorruptAndRepair,
    Score,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Summarize,
        Task::Careplan,
        Task::QaOpen,
        Task::QaMc,
        Task::CorruptAndRepair,
        Task::Score,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Summarize => "summarize",
            Task::Careplan => "careplan",
            Task::QaOpen => "qa_open",
            Task::QaMc => "qa_mc",
            Task::CorruptAndRepair => "corrupt_and_repair",
            Task::Score => "score",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    /// Cassette used as a plain reply script, without fingerprint checks.
    Scripted,
    Replay,
    Record,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Live => "live",
            BackendKind::Scripted => "scripted",
            BackendKind::Replay => "replay",
            BackendKind::Record => "record",
        }
    }

    pub fn needs_cassette(self) -> bool {
        self != BackendKind::Live
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendKind::Live),
            "scripted" => Ok(BackendKind::Scripted),
            "replay" => Ok(BackendKind::Replay),
            "record" => Ok(BackendKind::Record),
            other => Err(format!("unknown backend `{other}`")),
        }
    }
}

pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub backend: BackendKind,
    pub parallelism: usize,
    pub input: PathBuf,
    pub output: PathBuf,
    pub cassette: Option<PathBuf>,
    pub seed: u64,
    /// Levels for corrupt_and_repair.
    pub levels: Vec<CorruptionLevel>,
    pub model: String,
    pub overrides: ParamsOverride,
    /// Largest tolerated share of failed items.
    pub failure_threshold: f64,
    /// Live-backend requests per minute, shared by all workers.
    pub rate_limit: Option<u32>,
}

pub const KEYS: [&str; 18] = [
    "task",
    "backend",
    "parallelism",
    "input",
    "output",
    "cassette",
    "seed",
    "level",
    "model",
    "failure_threshold",
    "rate_limit",
    "temperature",
    "max_tokens",
    "top_p",
    "frequency_penalty",
    "num_completions",
    "turn_budget",
    "mode",
];

/// Raw settings in application order; later inserts win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// `#` starts a comment; blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            out.set(key.trim(), value.trim())?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|e: T::Err| ConfigError::Invalid {
                    key: key.to_string(),
                    message: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn into_config(self) -> Result<ExperimentConfig, ConfigError> {
        let task = self.parsed::<Task>("task")?.ok_or(ConfigError::Missing("task"))?;
        let backend = self.parsed::<BackendKind>("backend")?.unwrap_or(BackendKind::Live);
        let levels = match self.get("level") {
            None => CorruptionLevel::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|l| {
                    l.trim().parse().map_err(|e: dera::params::UnknownLevel| ConfigError::Invalid {
                        key: "level".into(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        let config = ExperimentConfig {
            task,
            backend,
            parallelism: self.parsed("parallelism")?.unwrap_or(1),
            input: self.parsed("input")?.ok_or(ConfigError::Missing("input"))?,
            output: self.parsed("output")?.ok_or(ConfigError::Missing("output"))?,
            cassette: self.parsed("cassette")?,
            seed: self.parsed("seed")?.unwrap_or(0),
            levels,
            model: self.get("model").unwrap_or(DEFAULT_MODEL).to_string(),
            overrides: ParamsOverride {
                temperature: self.parsed("temperature")?,
                max_tokens: self.parsed("max_tokens")?,
                top_p: self.parsed("top_p")?,
                frequency_penalty: self.parsed("frequency_penalty")?,
                num_completions: self.parsed("num_completions")?,
                turn_budget: self.parsed("turn_budget")?,
            },
            failure_threshold: self.parsed("failure_threshold")?.unwrap_or(DEFAULT_FAILURE_THRESHOLD),
            rate_limit: self.parsed("rate_limit")?,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.backend.needs_cassette() && self.cassette.is_none() {
            return Err(ConfigError::CassetteRequired(self.backend));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid {
                key: "parallelism".into(),
                message: "must be at least 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return Err(ConfigError::Invalid {
                key: "failure_threshold".into(),
                message: "must be within [0, 1]".into(),
            });
        }
        if self.levels.is_empty() {
            return Err(ConfigError::Invalid {
                key: "level".into(),
                message: "no levels given".into(),
            });
        }
        Ok(())
    }

    /// Cassette order must match call order, so cassette backends run one
    /// item at a time.
    pub fn effective_parallelism(&self) -> usize {
        match self.backend {
            BackendKind::Live => self.parallelism,
            _ => 1,
        }
    }
}
