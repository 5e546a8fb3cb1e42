use std::collections::BTreeSet;

use dera::datasets::{load_encounters, parse_jsonl, split_by_area, to_jsonl, ExamQuestion, StructuredSummary, NEJM_DEV_AREAS};
use dera_testkit::fixture_encounters;

#[test]
fn encounters_round_trip() {
    let fixtures = fixture_encounters(5);
    let text = to_jsonl(&fixtures);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    std::fs::write(&path, &text).unwrap();
    let loaded = load_encounters(&path).unwrap();
    assert_eq!(loaded, fixtures);
    assert_eq!(to_jsonl(&loaded), text);
}

#[test]
fn summary_text_round_trip() {
    for enc in fixture_encounters(10) {
        let s = enc.reference_summary.unwrap();
        assert_eq!(StructuredSummary::parse_text(&s.to_text()).unwrap(), s);
    }
}

#[test]
fn bad_records_name_their_line() {
    let text = "{\"id\":\"q1\",\"stem\":\"What?\",\"gold_text\":\"x\"}\n{\"id\":\"q2\"}\n";
    let err = parse_jsonl::<ExamQuestion>(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

#[test]
fn split_is_a_partition() {
    let areas = ["Endocrine", "Cardiology", "Reproductive", "Renal", "Maternity Care", "Pulmonary"];
    let qs: Vec<ExamQuestion> = (0..30)
        .map(|i| ExamQuestion {
            format_version: 1,
            id: i.to_string(),
            stem: "What?".into(),
            options: None,
            gold_letter: None,
            gold_text: "x".into(),
            area: Some(areas[i % areas.len()].into()),
            open_ended_stem: None,
        })
        .collect();
    let dev: BTreeSet<String> = NEJM_DEV_AREAS.iter().map(|s| s.to_string()).collect();
    let split = split_by_area(&qs, &dev).unwrap();
    assert_eq!(split.dev.len() + split.test.len(), qs.len());
    let dev_ids: BTreeSet<_> = split.dev.iter().map(|q| &q.id).collect();
    assert!(split.test.iter().all(|q| !dev_ids.contains(&q.id)));
    assert_eq!(split.dev.len(), 15);
}
