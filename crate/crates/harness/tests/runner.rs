use std::path::{Path, PathBuf};
use std::sync::Arc;

use dera::backend::{ChatRequest, FnBackend};
use dera::client::DEFAULT_MODEL;
use dera::datasets::{to_jsonl, Encounter, ExamQuestion};
use dera::prompts::PromptId;
use dera::{CorruptionLevel, ParamsOverride};
use dera_harness::report::{parse_log, TaskBody};
use dera_harness::{
    report_dir, run_experiment, run_with_backend, BackendKind, ConfigError, Detail, ExperimentConfig, RunError,
    ScorePair, Task,
};
use dera_testkit::{fixture_encounters, OracleBackend};

fn config(task: Task, input: PathBuf, output: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        task,
        backend: BackendKind::Live,
        parallelism: 1,
        input,
        output,
        cassette: None,
        seed: 0,
        levels: CorruptionLevel::ALL.to_vec(),
        model: DEFAULT_MODEL.to_string(),
        overrides: ParamsOverride::default(),
        failure_threshold: 0.1,
        rate_limit: None,
    }
}

fn oracle(encounters: &[Encounter]) -> Arc<OracleBackend> {
    Arc::new(OracleBackend::with_truths(
        encounters.iter().map(|e| (e, e.reference_summary.as_ref().unwrap())),
    ))
}

fn write_input(dir: &Path, name: &str, text: String) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn details(log_dir: &Path) -> Vec<Detail> {
    let mut files: Vec<_> = std::fs::read_dir(log_dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .filter_map(|p| {
            let text = std::fs::read_to_string(p).unwrap();
            parse_log(&p.display().to_string(), &text).unwrap().detail
        })
        .collect()
}

#[test]
fn replay_without_cassette_fails_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = ExperimentConfig {
        backend: BackendKind::Replay,
        ..config(Task::Summarize, dir.path().join("missing.jsonl"), out.clone())
    };
    assert!(matches!(
        run_experiment(&cfg),
        Err(RunError::Config(ConfigError::CassetteRequired(BackendKind::Replay)))
    ));
    assert!(!out.exists());
}

#[test]
fn repair_never_lowers_f1() {
    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(5);
    let input = write_input(dir.path(), "enc.jsonl", to_jsonl(&encounters));
    let summary = run_with_backend(&config(Task::CorruptAndRepair, input, dir.path().join("out")), oracle(&encounters)).unwrap();
    assert_eq!((summary.items, summary.failures), (15, 0));
    let rows = details(&summary.log_dir);
    assert_eq!(rows.len(), 15);
    for d in rows {
        let Detail::Repair { initial_f1, final_f1, scratchpad, .. } = d else {
            panic!("{d:?}")
        };
        assert!(final_f1 >= initial_f1);
        assert!(scratchpad > 0);
    }
}

#[test]
fn parallel_and_serial_runs_report_the_same() {
    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(6);
    let input = write_input(dir.path(), "enc.jsonl", to_jsonl(&encounters));
    let serial = config(Task::Summarize, input.clone(), dir.path().join("serial"));
    let parallel = ExperimentConfig {
        parallelism: 4,
        ..config(Task::Summarize, input, dir.path().join("parallel"))
    };
    let a = run_with_backend(&serial, oracle(&encounters)).unwrap();
    let b = run_with_backend(&parallel, oracle(&encounters)).unwrap();
    assert_eq!(a.report, b.report);
    for name in ["report.txt", "report.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("serial").join(name)).unwrap(),
            std::fs::read(dir.path().join("parallel").join(name)).unwrap()
        );
    }
}

fn questions() -> Vec<ExamQuestion> {
    [("q1", "What is the first-line drug?", "Metformin"), ("q2", "Which vessel?", "RCA"), ("q3", "Which test?", "TSH")]
        .into_iter()
        .map(|(id, stem, gold)| ExamQuestion {
            format_version: 1,
            id: id.into(),
            stem: stem.into(),
            options: None,
            gold_letter: None,
            gold_text: gold.into(),
            area: None,
            open_ended_stem: None,
        })
        .collect()
}

#[test]
fn open_qa_rows_and_judges() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path(), "q.jsonl", to_jsonl(&questions()));
    let backend = FnBackend::new(|req: &ChatRequest| {
        let reply = match req.prompt_id.unwrap() {
            PromptId::QaSingleShot | PromptId::QaFinal => "Metformin",
            PromptId::QaTeacher => "[DONE]",
            PromptId::QaExact if req.text().contains("Metformin\n") && req.text().matches("Metformin").count() > 1 => "Yes. Same drug.",
            PromptId::QaExact => "No. Different.",
            PromptId::QaSim => "0.5",
            _ => "Explanation.",
        };
        Ok(vec![reply.to_string(); req.params.num_completions as usize])
    });
    let summary = run_with_backend(&config(Task::QaOpen, input, dir.path().join("out")), Arc::new(backend)).unwrap();
    assert_eq!(summary.failures, 0);
    let TaskBody::Qa { rows, mean_similarity, .. } = &summary.report.tasks[0].body else {
        panic!()
    };
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.final_answer == "Metformin"));
    assert_eq!(*mean_similarity, Some(0.5));
    let text = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(text.contains("qa_open"), "{text}");
}

#[test]
fn item_failures_are_logged_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(4);
    let input = write_input(dir.path(), "enc.jsonl", to_jsonl(&encounters));
    // Truth only for the first two encounters; the oracle refuses the rest.
    let summary = run_with_backend(&config(Task::Summarize, input, dir.path().join("out")), oracle(&encounters[..2])).unwrap();
    assert_eq!((summary.items, summary.failures), (4, 2));
    assert!(summary.exceeds(0.1));
    assert!(!summary.exceeds(0.5));
    let names: Vec<String> = std::fs::read_dir(&summary.log_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 4);
    assert!(names.iter().all(|n| n.ends_with(".jsonl")));
    // Every log parses back, failed items included.
    let again = report_dir(&summary.log_dir).unwrap();
    assert_eq!(again, summary.report);
    assert_eq!(again.tasks[0].failures.len(), 2);
}

#[test]
fn report_over_mixed_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(2);
    let input = write_input(dir.path(), "enc.jsonl", to_jsonl(&encounters));
    let pairs: Vec<ScorePair> = encounters
        .iter()
        .map(|e| ScorePair {
            format_version: 1,
            id: e.id.clone(),
            ground_truth: e.reference_summary.clone().unwrap(),
            predicted: e.reference_summary.clone().unwrap(),
        })
        .collect();
    let pair_input = write_input(dir.path(), "pairs.jsonl", to_jsonl(&pairs));
    let a = run_with_backend(&config(Task::Summarize, input, dir.path().join("a")), oracle(&encounters)).unwrap();
    let b = run_with_backend(&config(Task::Score, pair_input, dir.path().join("b")), oracle(&encounters)).unwrap();
    let TaskBody::Score { mean_f1, .. } = b.report.tasks[0].body else {
        panic!()
    };
    assert_eq!(mean_f1, 1.0);

    let merged = dir.path().join("merged");
    std::fs::create_dir(&merged).unwrap();
    for log_dir in [&a.log_dir, &b.log_dir] {
        for entry in std::fs::read_dir(log_dir).unwrap() {
            let p = entry.unwrap().path();
            let name = format!("{}-{}", log_dir.parent().unwrap().file_name().unwrap().to_string_lossy(), p.file_name().unwrap().to_string_lossy());
            std::fs::copy(&p, merged.join(name)).unwrap();
        }
    }
    let report = report_dir(&merged).unwrap();
    let tasks: Vec<Task> = report.tasks.iter().map(|t| t.task).collect();
    assert_eq!(tasks, [Task::Summarize, Task::Score]);
    assert_eq!(report.to_text(), report_dir(&merged).unwrap().to_text());
}

#[test]
fn duplicate_item_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut encounters = fixture_encounters(2);
    encounters[1].id = encounters[0].id.clone();
    let input = write_input(dir.path(), "enc.jsonl", to_jsonl(&encounters));
    let err = run_with_backend(&config(Task::Summarize, input, dir.path().join("out")), oracle(&encounters)).unwrap_err();
    assert!(matches!(err, RunError::Input { .. }), "{err}");
}
