use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use dera::client::PromptClient;
use dera::corruption::{corrupt, CorruptionJob};
use dera::datasets::{load_questions, to_jsonl, RewriteMode, Rewriter, StructuredSummary};
use dera::prompts::PromptRegistry;
use dera_harness::{backend_for, report_dir, run_experiment, ConfigError, ExperimentConfig, RunError, Settings};

/// Researcher/Decider experiments: run, record, replay and report.
#[derive(Parser)]
#[command(name = "dera", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment with the configured backend.
    Run(Flags),
    /// Run against the live API and record a cassette.
    Record(Flags),
    /// Run against a recorded cassette.
    Replay(Flags),
    /// Corrupt summaries (JSON lines) at one level.
    Corrupt(Flags),
    /// Rewrite multiple-choice stems as open-ended questions.
    Rewrite(Flags),
    /// Score ground-truth/predicted summary pairs with GPT-F1.
    Score(Flags),
    /// Build a report from a directory of run logs.
    Report(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    /// live, scripted, replay or record.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    cassette: Option<String>,
    /// low, medium or high (comma-separated for runs).
    #[arg(long)]
    level: Option<String>,
    /// last_sentence or full.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    parallelism: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    failure_threshold: Option<String>,
}

impl Flags {
    fn settings(&self) -> Result<Settings, ConfigError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::new(),
        };
        let flags = [
            ("task", &self.task),
            ("backend", &self.backend),
            ("input", &self.input),
            ("output", &self.output),
            ("cassette", &self.cassette),
            ("level", &self.level),
            ("mode", &self.mode),
            ("parallelism", &self.parallelism),
            ("seed", &self.seed),
            ("model", &self.model),
            ("failure_threshold", &self.failure_threshold),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.set(key, v.clone())?;
            }
        }
        Ok(s)
    }
}

enum Failure {
    Config(String),
    Threshold(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Threshold(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(f) => run(f.settings()?),
        Command::Record(f) => run(forced(f.settings()?, "backend", "record")?),
        Command::Replay(f) => run(forced(f.settings()?, "backend", "replay")?),
        Command::Score(f) => run(forced(f.settings()?, "task", "score")?),
        Command::Corrupt(f) => corrupt_cmd(forced(f.settings()?, "task", "corrupt_and_repair")?),
        Command::Rewrite(f) => rewrite_cmd(forced(f.settings()?, "task", "qa_open")?),
        Command::Report(f) => report_cmd(f.settings()?),
    }
}

fn forced(mut s: Settings, key: &str, value: &str) -> Result<Settings, ConfigError> {
    s.set(key, value)?;
    Ok(s)
}

fn run(settings: Settings) -> Result<(), Failure> {
    let config = settings.into_config()?;
    if config.effective_parallelism() < config.parallelism {
        eprintln!("note: {} backend runs one item at a time", config.backend);
    }
    let summary = run_experiment(&config)?;
    print!("{}", summary.report.to_text());
    eprintln!(
        "{} items, {} failed; logs in {}",
        summary.items,
        summary.failures,
        summary.log_dir.display()
    );
    if summary.exceeds(config.failure_threshold) {
        return Err(Failure::Threshold(format!(
            "failure ratio {:.3} exceeds threshold {}",
            summary.failure_ratio(),
            config.failure_threshold
        )));
    }
    Ok(())
}

fn client(config: &ExperimentConfig) -> Result<PromptClient, Failure> {
    let backend = backend_for(config.backend, config.cassette.as_deref(), config.rate_limit)?;
    Ok(PromptClient::new(backend, Arc::new(PromptRegistry::builtin()))
        .model(config.model.clone())
        .overrides(config.overrides))
}

fn read_summaries(path: &Path) -> Result<Vec<StructuredSummary>, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let summary = serde_json::from_str(&line)
            .map_err(|e| Failure::Other(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(summary);
    }
    Ok(out)
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    let mut file = std::fs::File::create(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn check_threshold(failed: usize, total: usize, threshold: f64) -> Result<(), Failure> {
    let ratio = if total == 0 { 0.0 } else { failed as f64 / total as f64 };
    if ratio > threshold {
        return Err(Failure::Threshold(format!(
            "{failed} of {total} items failed (ratio {ratio:.3}, threshold {threshold})"
        )));
    }
    Ok(())
}

fn corrupt_cmd(settings: Settings) -> Result<(), Failure> {
    let config = settings.into_config()?;
    let [level] = config.levels[..] else {
        return Err(Failure::Config("corrupt takes exactly one --level".into()));
    };
    let summaries = read_summaries(&config.input)?;
    let client = client(&config)?;
    let mut out = Vec::new();
    let mut failed = 0;
    for (i, summary) in summaries.iter().enumerate() {
        let job = CorruptionJob {
            source_summary: summary.clone(),
            level,
            seed_note: format!("line {} seed {}", i + 1, config.seed),
        };
        match corrupt(&client, &job) {
            Ok(c) => out.push(c.summary),
            Err(e) => {
                eprintln!("line {}: {e}", i + 1);
                failed += 1;
            }
        }
    }
    write_output(&config.output, &to_jsonl(&out))?;
    check_threshold(failed, summaries.len(), config.failure_threshold)
}

fn rewrite_cmd(settings: Settings) -> Result<(), Failure> {
    let mode: RewriteMode = settings
        .get("mode")
        .unwrap_or("last_sentence")
        .parse()
        .map_err(Failure::Config)?;
    let config = settings.into_config()?;
    let questions = load_questions(&config.input).map_err(|e| Failure::Other(format!("{}: {e}", config.input.display())))?;
    let rewriter = Rewriter::new(client(&config)?);
    let mut out = Vec::new();
    let mut failed = 0;
    for q in &questions {
        match rewriter.rewrite(q, mode) {
            Ok(r) => out.push(r),
            Err(e) => {
                eprintln!("{e}");
                failed += 1;
            }
        }
    }
    write_output(&config.output, &to_jsonl(&out))?;
    check_threshold(failed, questions.len(), config.failure_threshold)
}

fn report_cmd(settings: Settings) -> Result<(), Failure> {
    let input = settings
        .get("input")
        .ok_or(Failure::Config("report needs --input <log dir>".into()))?;
    let report = report_dir(Path::new(input)).map_err(|e| Failure::Other(e.to_string()))?;
    match settings.get("output") {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("{dir}: {e}")))?;
            report.write(Path::new(dir)).map_err(|e| Failure::Other(e.to_string()))?;
        }
        None => print!("{}", report.to_text()),
    }
    Ok(())
}
