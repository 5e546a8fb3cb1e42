use std::sync::Arc;

use dera::backend::ScriptedBackend;
use dera::client::PromptClient;
use dera::metrics::{Aggregation, MetricReport, MetricsError, Scorer};
use dera_testkit::{brute_force_f1, section_concepts, OracleBackend};

fn scorer(script: &Arc<ScriptedBackend>) -> Scorer {
    Scorer::new(PromptClient::with_builtin_prompts(Arc::clone(script)))
}

fn scripted(replies: &[&str]) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(replies.iter().map(|r| vec![*r])))
}

#[test]
fn extraction_examples() {
    let s = scripted(&["fever\ncough", "Fever\nfever"]);
    let sc = scorer(&s);
    assert_eq!(sc.extract_concepts("some text").unwrap().as_slice(), ["fever", "cough"]);
    assert_eq!(sc.extract_concepts("other text").unwrap().as_slice(), ["Fever"]);
    assert!(sc.extract_concepts("").unwrap().is_empty());
    assert_eq!(s.calls(), 2);
}

#[test]
fn verification_examples() {
    let s = scripted(&["present\nabsent", "present\nabsent"]);
    let sc = scorer(&s);
    let two = dera::metrics::ConceptSet::new(["fever", "cough"]);
    assert_eq!(sc.verify_concepts(&two, "fever").unwrap(), [true, false]);
    assert!(sc.verify_concepts(&dera::metrics::ConceptSet::default(), "x").unwrap().is_empty());
    let three = dera::metrics::ConceptSet::new(["a", "b", "c"]);
    assert!(matches!(
        sc.verify_concepts(&three, "x"),
        Err(MetricsError::VerifierShapeError { expected: 3, got: 2 })
    ));
}

#[test]
fn worked_values() {
    let r = MetricReport::from_counts(3, 1, 3, 0);
    assert_eq!(r.recall, 0.75);
    // P = R = 0.8
    assert!((MetricReport::from_counts(4, 1, 4, 1).f1 - 0.8).abs() < 1e-12);
    // P = 0.75, R = 0.5
    let r = MetricReport::from_counts(1, 1, 3, 1);
    assert!((r.f1 - 0.6).abs() < 1e-12);
}

#[test]
fn gpt_f1_through_the_prompts_matches_set_arithmetic() {
    let sc = Scorer::new(PromptClient::with_builtin_prompts(OracleBackend::new()));
    let gt = "fever; cough; chills; fatigue";
    let pred = "fever; cough; chills; rash";
    let r = sc.gpt_f1(gt, pred).unwrap();
    assert_eq!((r.tp_gt, r.fn_, r.tp_pred, r.fp), (3, 1, 3, 1));
    let (recall, precision, f1) = brute_force_f1(&section_concepts(gt), &section_concepts(pred));
    assert_eq!((r.recall, r.precision, r.f1), (recall, precision, f1));
}

#[test]
fn degenerate_sections() {
    let sc = Scorer::new(PromptClient::with_builtin_prompts(OracleBackend::new()));
    let both = sc.gpt_f1("", "").unwrap();
    assert_eq!((both.recall, both.precision, both.f1), (1.0, 1.0, 1.0));
    let no_pred = sc.gpt_f1("fever", "").unwrap();
    assert_eq!((no_pred.recall, no_pred.precision, no_pred.f1), (0.0, 0.0, 0.0));
}

#[test]
fn micro_vs_macro_documents() {
    let sections = [("a", "x; y", "x; y"), ("b", "p; q; r; s", "p")];
    let backend = || PromptClient::with_builtin_prompts(OracleBackend::new());
    let micro = Scorer::new(backend()).gpt_f1_sections(sections).unwrap();
    let macro_ = Scorer::new(backend())
        .with_aggregation(Aggregation::Macro)
        .gpt_f1_sections(sections)
        .unwrap();
    // Micro: recall 3/6, precision 3/3.
    assert!((micro.overall.f1 - 2.0 / 3.0).abs() < 1e-12);
    // Macro: mean of 1.0 and 0.4.
    assert!((macro_.overall.f1 - 0.7).abs() < 1e-12);
    assert_eq!(micro.rows("d").last().unwrap().section, "document");
}

#[test]
fn similarity_examples() {
    let s = scripted(&["0.85", "1.5", "0.3", "100", "100", "about half"]);
    let sc = scorer(&s);
    assert_eq!(sc.similarity_score("a", "b").unwrap(), 0.85);
    assert_eq!(sc.similarity_scores(&[("a", "b"), ("c", "d")]).unwrap(), [0.0, 0.3]);
    assert_eq!(sc.similarity_scores(&[("a", "b"), ("c", "d")]).unwrap(), [1.0, 1.0]);
    assert!(matches!(sc.similarity_score("a", "b"), Err(MetricsError::SimilarityParseError(_))));
}

#[test]
fn exact_match_examples() {
    let s = scripted(&["Yes, same condition, different phrasing", "No. The answers name different drugs.", "Maybe"]);
    let sc = scorer(&s);
    assert!(sc.exact_match_judge("Meta-analysis", "Meta-analysis").unwrap().matched);
    assert_eq!(s.calls(), 0);
    let yes = sc.exact_match_judge("UTI", "Urinary tract infection").unwrap();
    assert!(yes.matched);
    assert_eq!(yes.explanation, "same condition, different phrasing");
    let no = sc.exact_match_judge("Aspirin", "Heparin").unwrap();
    assert!(!no.matched);
    assert_eq!(no.explanation, "The answers name different drugs.");
    assert!(matches!(sc.exact_match_judge("a", "b"), Err(MetricsError::JudgeParseError(_))));
}

#[test]
fn score_rows_serialize_with_fn_field() {
    let sc = Scorer::new(PromptClient::with_builtin_prompts(OracleBackend::new()));
    let doc = sc.gpt_f1_sections([("medical_intent", "a; b; c; d", "a; b; c; e")]).unwrap();
    let json = serde_json::to_string(&doc.rows("d1")[0]).unwrap();
    assert_eq!(
        json,
        r#"{"doc_id":"d1","section":"medical_intent","tp_gt":3,"fn":1,"tp_pred":3,"fp":1,"recall":0.75,"precision":0.75,"f1":0.75}"#
    );
}
