//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines always reach the terminal.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dera::backend::{ChatRequest, FnBackend, RecordingBackend, ReplayBackend};
use dera::client::{PromptClient, DEFAULT_MODEL};
use dera::datasets::{to_jsonl, ExamQuestion, RewriteError, RewriteMode, Rewriter};
use dera::metrics::{MetricReport, Scorer};
use dera::orchestrator::{Dera, LongFormTask, QaMode, RunLog};
use dera::prompts::{PromptId, PromptRegistry};
use dera::{majority_vote, CorruptionLevel, ParamsOverride, Role, Termination};
use dera_harness::report::TaskBody;
use dera_harness::{run_experiment, run_with_backend, BackendKind, ExperimentConfig, Task};
use dera_testkit::{
    brute_force_f1, brute_force_vote, fixture_encounters, id574_cassette, id574_question, section_concepts, tag,
    OracleBackend,
};
use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};

type Criterion = (&'static str, Duration, fn() -> String);

fn main() {
    let criteria: [Criterion; 7] = [
        ("metric oracle equivalence", Duration::from_secs(1), metric_oracle),
        ("voting correctness", Duration::from_secs(1), voting),
        ("protocol conformance", Duration::from_secs(2), protocol),
        ("corruption stress-test shape", Duration::from_secs(5), corruption_shape),
        ("wire fidelity and determinism", Duration::MAX, wire_fidelity),
        ("rewriting safety", Duration::MAX, rewriting),
        ("ID-574 transcript replay", Duration::MAX, id574),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let took = start.elapsed();
        let line = match outcome {
            Ok(detail) if took <= budget => format!("PASS {name}: {detail} ({} ms)", took.as_millis()),
            Ok(detail) => format!(
                "FAIL {name}: {detail}, but took {} ms (limit {} ms)",
                took.as_millis(),
                budget.as_millis()
            ),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL {name}: {msg}")
            }
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("criterion {}: {line}", i + 1);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn client(backend: impl dera::backend::ChatBackend + 'static) -> PromptClient {
    PromptClient::with_builtin_prompts(backend)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn metric_oracle() -> String {
    let pool: Vec<String> = (0..30).map(|k| format!("finding {k}")).collect();
    let mut rng = StdRng::seed_from_u64(7);
    let mut fixtures: Vec<(Vec<String>, Vec<String>)> = Vec::new();
    for _ in 0..50 {
        let n = rng.random_range(0..9);
        let gt: Vec<String> = pool.choose_multiple(&mut rng, n).cloned().collect();
        let n = rng.random_range(0..9);
        let pred: Vec<String> = pool.choose_multiple(&mut rng, n).cloned().collect();
        fixtures.push((gt, pred));
    }
    let set = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    // recall 0.75; P = R = 0.8; P = 0.75 with R = 0.5
    let worked = [
        (set("a b c d"), set("a b c"), 0.75, 1.0, 6.0 / 7.0),
        (set("a b c d e"), set("a b c d x"), 0.8, 0.8, 0.8),
        (set("a b c d e f"), set("a b c x"), 0.5, 0.75, 0.6),
    ];
    let scorer = Scorer::new(client(OracleBackend::new()));
    for (gt, pred, recall, precision, f1) in &worked {
        let r = scorer.gpt_f1(&gt.join("; "), &pred.join("; ")).unwrap();
        assert!(close(r.recall, *recall) && close(r.precision, *precision) && close(r.f1, *f1), "worked value {r:?}");
        fixtures.push((gt.clone(), pred.clone()));
    }
    assert_eq!(MetricReport::from_counts(3, 1, 3, 0).recall, 0.75);
    assert!(close(MetricReport::from_counts(4, 1, 4, 1).f1, 0.8));
    assert!(close(MetricReport::from_counts(1, 1, 3, 1).f1, 0.6));

    for (gt, pred) in &fixtures {
        let (gt_text, pred_text) = (gt.join("; "), pred.join("; "));
        let r = scorer.gpt_f1(&gt_text, &pred_text).unwrap();
        let (recall, precision, f1) = brute_force_f1(&section_concepts(&gt_text), &section_concepts(&pred_text));
        assert!(
            close(r.recall, recall) && close(r.precision, precision) && close(r.f1, f1),
            "{gt_text:?} vs {pred_text:?}: got {r:?}, expected ({recall}, {precision}, {f1})"
        );
    }
    format!("{} fixtures match within 1e-12, worked values hold", fixtures.len())
}

fn voting() -> String {
    // Distinct lexical forms of one answer; they must stay separate.
    let alphabet = ["Meta-analysis", "meta-analysis", "Meta analysis"];
    let mut ballots: Vec<Vec<String>> = Vec::new();
    for len in 1..=6u32 {
        for code in 0..3usize.pow(len) {
            let mut c = code;
            ballots.push(
                (0..len)
                    .map(|_| {
                        let s = alphabet[c % 3].to_string();
                        c /= 3;
                        s
                    })
                    .collect(),
            );
        }
    }
    let full = ballots.iter().filter(|b| b.len() == 6).count();
    assert_eq!(full, 729);
    let mut rng = StdRng::seed_from_u64(11);
    let mut spot = 0;
    for ballot in &ballots {
        assert_eq!(Some(majority_vote(ballot).unwrap()), brute_force_vote(ballot), "{ballot:?}");
        if ballot.len() == 6 && rng.random_bool(0.2) {
            let mut shuffled = ballot.clone();
            shuffled.shuffle(&mut rng);
            assert_eq!(Some(majority_vote(&shuffled).unwrap()), brute_force_vote(&shuffled), "{shuffled:?}");
            spot += 1;
        }
    }
    assert!(majority_vote::<&str>(&[]).is_err());
    format!("{} ballots ({full} of length 6) and {spot} permutations agree", ballots.len())
}

/// Records a run to a cassette, then replays it. Properties are checked on
/// the replayed run.
fn record_replay<T: PartialEq + std::fmt::Debug>(
    dir: &Path,
    name: &str,
    backend: impl dera::backend::ChatBackend + 'static,
    run: impl Fn(&Dera) -> T,
) -> T {
    let path = dir.join(format!("{name}.jsonl"));
    let recorded = run(&Dera::new(client(RecordingBackend::create(backend, &path).unwrap())));
    let replayed = run(&Dera::new(client(ReplayBackend::open(&path).unwrap())));
    assert_eq!(recorded, replayed, "{name}: replay differs from recording");
    replayed
}

const ENCOUNTER: &str = "Patient: 41-year-old male\nReason for visit: cough\n\nPatient: I have had a dry cough for a week.";

fn protocol() -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let suggestions = ["add dry cough", "add fever", "add no chest pain"];
    let mut longform = 0;
    for case in 0..24 {
        // None: the Researcher never says [DONE].
        let done_at = if case % 4 == 0 { None } else { Some(rng.random_range(0..8usize)) };
        let all_reject = case % 3 == 0;
        let rounds: Vec<String> = (0..8)
            .map(|_| {
                (0..rng.random_range(1..4))
                    .map(|_| {
                        if all_reject || rng.random_bool(0.3) {
                            "REJECT: not in the encounter".to_string()
                        } else {
                            format!("ACCEPT: {}", suggestions.choose(&mut rng).unwrap())
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .collect();
        let task = if case % 2 == 0 {
            LongFormTask::Summarization
        } else {
            LongFormTask::CarePlan
        };
        let (researcher, decider) = (Arc::new(AtomicUsize::new(0)), Arc::new(AtomicUsize::new(0)));
        let replies = rounds.clone();
        let backend = FnBackend::new(move |req: &ChatRequest| {
            let reply = match req.prompt_id.unwrap() {
                PromptId::SummInitial | PromptId::CpInitial => "Draft:\ninitial text".to_string(),
                PromptId::SummResearcher | PromptId::CpResearcher => {
                    let n = researcher.fetch_add(1, Ordering::SeqCst);
                    if done_at == Some(n) {
                        "[DONE]".into()
                    } else {
                        format!("Point {n}: the draft misses something.")
                    }
                }
                PromptId::SummDecider | PromptId::CpDecider => replies[decider.fetch_add(1, Ordering::SeqCst)].clone(),
                PromptId::SummFinal | PromptId::CpFinal => "Draft:\nrewritten text".to_string(),
                other => panic!("unexpected {other}"),
            };
            Ok(vec![reply])
        });
        let out = record_replay(dir.path(), &format!("lf{case}"), backend, |d| {
            d.run_longform(task, ENCOUNTER, &mut RunLog::new("lf")).unwrap()
        });

        // Independent expectation: rounds completed before [DONE] or the budget.
        let completed = done_at.filter(|&k| k < 7).unwrap_or(7);
        let never_done = done_at.is_none_or(|k| k >= 7);
        let mut expected: Vec<&str> = Vec::new();
        for reply in &rounds[..completed] {
            for line in reply.lines() {
                if let Some(text) = line.strip_prefix("ACCEPT: ") {
                    if expected.last() != Some(&text) {
                        expected.push(text);
                    }
                }
            }
        }
        assert!(out.transcript.len() <= 15, "case {case}: {} messages", out.transcript.len());
        assert_eq!(out.transcript.len(), 1 + 2 * completed, "case {case}");
        assert_eq!(out.terminated_by() == Termination::TurnBudget, never_done, "case {case}");
        assert_eq!(out.scratchpad.entries(), expected.as_slice(), "case {case}");
        if out.scratchpad.is_empty() {
            assert_eq!(out.final_output.as_bytes(), out.initial_output.as_bytes(), "case {case}");
        } else {
            assert_eq!(out.final_output, "Draft:\nrewritten text");
        }
        longform += 1;
    }

    let letters = ["A", "B", "C"];
    let mut qa = 0;
    for case in 0..12 {
        let done_at = if case % 3 == 0 { None } else { Some(rng.random_range(0..4usize)) };
        let single: Vec<String> = (0..5).map(|_| letters.choose(&mut rng).unwrap().to_string()).collect();
        let finals: Vec<String> = (0..5).map(|_| letters.choose(&mut rng).unwrap().to_string()).collect();
        let teacher = Arc::new(AtomicUsize::new(0));
        let (s, f) = (single.clone(), finals.clone());
        let backend = FnBackend::new(move |req: &ChatRequest| {
            Ok(match req.prompt_id.unwrap() {
                PromptId::QaSingleShot => s.clone(),
                PromptId::QaFinal => f.clone(),
                PromptId::QaStudentExp => vec!["The votes lean one way.".into()],
                PromptId::QaTeacher => {
                    let n = teacher.fetch_add(1, Ordering::SeqCst);
                    vec![if done_at == Some(n) { "[DONE]".into() } else { format!("Hint {n}") }]
                }
                PromptId::QaStudent => vec!["Reasoning.\nANSWER: B".into()],
                other => panic!("unexpected {other}"),
            })
        });
        let q = ExamQuestion {
            format_version: 1,
            id: format!("q{case}"),
            stem: "Which drug is first line?".into(),
            options: None,
            gold_letter: None,
            gold_text: "A".into(),
            area: None,
            open_ended_stem: None,
        };
        let out = record_replay(dir.path(), &format!("qa{case}"), backend, |d| {
            d.run_qa(&q, QaMode::OpenEnded, &mut RunLog::new("qa")).unwrap()
        });
        let turns = out.transcript.count_role(Role::AgentResearcher);
        assert!(turns <= 3, "qa case {case}: {turns} researcher turns");
        assert_eq!(turns, done_at.unwrap_or(3).min(3), "qa case {case}");
        assert!(out.final_completions.contains(&out.final_answer), "qa case {case}");
        assert_eq!(Some(out.final_answer.clone()), brute_force_vote(&finals));
        qa += 1;
    }
    format!("{longform} long-form and {qa} QA replays conform")
}

fn config(task: Task, backend: BackendKind, input: PathBuf, output: PathBuf, cassette: Option<PathBuf>) -> ExperimentConfig {
    ExperimentConfig {
        task,
        backend,
        parallelism: 4,
        input,
        output,
        cassette,
        seed: 0,
        levels: CorruptionLevel::ALL.to_vec(),
        model: DEFAULT_MODEL.to_string(),
        overrides: ParamsOverride::default(),
        failure_threshold: 0.0,
        rate_limit: None,
    }
}

fn oracle_for(encounters: &[dera::datasets::Encounter]) -> OracleBackend {
    OracleBackend::with_truths(encounters.iter().map(|e| (e, e.reference_summary.as_ref().unwrap())))
}

fn corruption_shape() -> String {
    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(10);
    let input = dir.path().join("encounters.jsonl");
    std::fs::write(&input, to_jsonl(&encounters)).unwrap();
    let cfg = config(Task::CorruptAndRepair, BackendKind::Live, input, dir.path().join("out"), None);
    let summary = run_with_backend(&cfg, Arc::new(oracle_for(&encounters))).unwrap();
    assert_eq!(summary.failures, 0, "{:?}", summary.report.tasks[0].failures);
    let TaskBody::Repair { levels } = &summary.report.tasks[0].body else {
        panic!("not a repair report")
    };
    assert_eq!(levels.len(), 3);
    for pair in levels.windows(2) {
        assert!(
            pair[0].mean_initial_f1 > pair[1].mean_initial_f1,
            "initial F1 not decreasing: {} then {}",
            pair[0].mean_initial_f1,
            pair[1].mean_initial_f1
        );
    }
    for row in levels {
        assert_eq!(row.items, 10);
        assert!(row.mean_final_f1 >= row.mean_initial_f1, "{row:?}");
    }
    levels
        .iter()
        .map(|r| format!("{} {:.3}->{:.3}", r.level.label(), r.mean_initial_f1, r.mean_final_f1))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn wire_fidelity() -> String {
    let reg = PromptRegistry::builtin();
    let body = |id: PromptId, text: &str| {
        ChatRequest::single_user("gpt-4", id, text, reg.params_for(id).unwrap()).to_wire_json()
    };
    assert_eq!(
        body(PromptId::QaSingleShot, "Q?"),
        r#"{"model":"gpt-4","messages":[{"role":"user","content":"Q?"}],"temperature":0.7,"top_p":1.0,"max_tokens":50,"frequency_penalty":0.0,"n":5}"#
    );
    assert_eq!(
        body(PromptId::SummDecider, "D?"),
        r#"{"model":"gpt-4","messages":[{"role":"user","content":"D?"}],"temperature":1.0,"top_p":1.0,"max_tokens":512,"frequency_penalty":0.0,"n":1}"#
    );

    let dir = tempfile::tempdir().unwrap();
    let encounters = fixture_encounters(3);
    let input = dir.path().join("encounters.jsonl");
    std::fs::write(&input, to_jsonl(&encounters)).unwrap();
    let mut files = 0;
    for task in [Task::Summarize, Task::CorruptAndRepair] {
        let cassette = dir.path().join(format!("{task}.cassette.jsonl"));
        let out = dir.path().join(format!("{task}-record"));
        let cfg = config(task, BackendKind::Record, input.clone(), out.clone(), Some(cassette.clone()));
        let recorder = RecordingBackend::create(oracle_for(&encounters), &cassette).unwrap();
        run_with_backend(&cfg, Arc::new(recorder)).unwrap();
        let recorded = snapshot(&out);
        assert!(recorded.contains_key(Path::new("report.txt")) && recorded.contains_key(Path::new("report.json")));
        for i in 0..3 {
            let out = dir.path().join(format!("{task}-replay{i}"));
            let cfg = config(task, BackendKind::Replay, input.clone(), out.clone(), Some(cassette.clone()));
            run_experiment(&cfg).unwrap();
            assert_eq!(snapshot(&out), recorded, "{task}: replay {i} differs");
        }
        files += recorded.len();
    }
    format!("golden bodies match; {files} log and report files byte-identical over 3 replays")
}

const STEMS: [&str; 6] = [
    "A 15-year-old girl has frequent diarrhea. Her BMI is 17 (normal 18.5-25). A biopsy shows blunted villi. Which of the following is the patient likely deficient in?",
    "A 60-year-old man has crushing chest pain. ECG shows ST elevation in leads II, III and aVF. Which of the following arteries is most likely occluded?",
    "A newborn has bilious vomiting. An X-ray shows a double bubble sign. Which of the following is the most likely diagnosis?",
    "A 30-year-old woman has heat intolerance and weight loss. TSH is 0.01 mU/L. Which of the following is the best next step?",
    "Which of the following is the mechanism of action of aspirin?",
    "A 25-year-old runner has shin pain. Pain is worse at the end of runs (about 5.5 km). Which of the following is the most likely cause?",
];

const OPEN_STEMS: [&str; 3] = [
    "What is the most likely diagnosis?",
    "A 70-year-old man falls. What imaging should be ordered first?",
    "Name the enzyme deficient in classic galactosemia.",
];

fn question(id: usize, stem: &str) -> ExamQuestion {
    ExamQuestion {
        format_version: 1,
        id: format!("r{id}"),
        stem: stem.into(),
        options: None,
        gold_letter: None,
        gold_text: "x".into(),
        area: None,
        open_ended_stem: None,
    }
}

fn rewriting() -> String {
    const CUE: &str = "Which of the following";
    // Rewrites only the final sentence, as a faithful model would.
    let faithful = Rewriter::new(client(FnBackend::new(|req: &ChatRequest| {
        let stem = tag(&req.text(), "question").unwrap().to_string();
        let at = stem.rfind(CUE).unwrap();
        Ok(vec![format!("{}{}", &stem[..at], stem[at..].replacen(CUE, "What", 1))])
    })));
    // Also touches an earlier sentence.
    let drifting = Rewriter::new(client(FnBackend::new(|req: &ChatRequest| {
        let text = req.text();
        let stem = tag(&text, "question").unwrap();
        Ok(vec![format!("Note: {}", stem.replacen(CUE, "What", 1))])
    })));
    let mut with_head = 0;
    for (i, stem) in STEMS.iter().enumerate() {
        let q = question(i, stem);
        let out = faithful.rewrite(&q, RewriteMode::LastSentence).unwrap();
        let rewritten = out.open_ended_stem.unwrap();
        let head = &stem[..stem.rfind(CUE).unwrap()];
        assert!(rewritten.starts_with(head), "{rewritten:?} lost the head {head:?}");
        assert!(!rewritten.contains(CUE));
        if !head.is_empty() {
            with_head += 1;
            match drifting.rewrite(&q, RewriteMode::LastSentence) {
                Err(RewriteError::RewriteDriftError { id, .. }) => assert_eq!(id, q.id),
                other => panic!("drift not caught for {}: {other:?}", q.id),
            }
        }
    }

    let calls = Arc::new(FnBackend::new(|_: &ChatRequest| panic!("open stems need no call")));
    let passthrough = Rewriter::new(client(Arc::clone(&calls)));
    for (i, stem) in OPEN_STEMS.iter().enumerate() {
        for mode in [RewriteMode::LastSentence, RewriteMode::Full] {
            let out = passthrough.rewrite(&question(i, stem), mode).unwrap();
            assert_eq!(out.open_ended_stem.as_deref(), Some(*stem));
        }
    }
    assert_eq!(calls.calls(), 0);
    format!(
        "{} stems keep their head byte for byte, {with_head} drifts caught, {} open stems made 0 calls",
        STEMS.len(),
        OPEN_STEMS.len()
    )
}

fn id574() -> String {
    let d = Dera::new(client(ReplayBackend::new(id574_cassette(DEFAULT_MODEL))));
    let out = d.run_qa(&id574_question(), QaMode::OpenEnded, &mut RunLog::new("574")).unwrap();
    assert_eq!(out.tally.winner(), "Meta-analysis");
    assert_eq!(out.single_shot_answer, "Meta-analysis");
    assert_eq!(out.final_answer, "Systematic review and meta-analysis");
    format!(
        "initial vote {:?} ({}), final {:?}",
        out.single_shot_answer,
        out.tally.render_percentages().replace('\n', " "),
        out.final_answer
    )
}
