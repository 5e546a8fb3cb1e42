use dera::backend::ChatRequest;
use dera::prompts::{vars, PromptId, PromptRegistry, PromptSource};
use dera::GenerationParams;

/// (id, temperature, max_tokens, top_p, n, frequency_penalty, turn budget)
/// as documented for each prompt. Rows without a turn count print
/// "-" and map to no budget.
type Row = (PromptId, f64, u32, f64, u32, f64, Option<u32>);

const TABLE: &[Row] = &[
    (PromptId::SummInitial, 1.0, 512, 1.0, 1, 0.0, None),
    (PromptId::SummDecider, 1.0, 512, 1.0, 1, 0.0, Some(15)),
    (PromptId::SummResearcher, 1.0, 512, 1.0, 1, 0.0, Some(15)),
    (PromptId::SummCorruption, 1.0, 512, 1.0, 1, 0.0, None),
    (PromptId::SummFinal, 1.0, 512, 1.0, 1, 0.0, None),
    (PromptId::MetricExtractor, 0.0, 200, 1.0, 1, 0.0, None),
    (PromptId::MetricVerifier, 0.0, 200, 1.0, 1, 0.0, None),
    (PromptId::CpInitial, 1.0, 512, 1.0, 1, 0.0, None),
    (PromptId::CpDecider, 1.0, 512, 1.0, 1, 0.0, Some(15)),
    (PromptId::CpResearcher, 1.0, 512, 1.0, 1, 0.0, Some(15)),
    (PromptId::CpFinal, 1.0, 512, 1.0, 1, 0.0, None),
    (PromptId::QaSingleShot, 0.7, 50, 1.0, 5, 0.0, Some(1)),
    (PromptId::QaStudentExp, 0.0, 400, 1.0, 1, 0.0, Some(1)),
    (PromptId::QaStudent, 0.3, 250, 1.0, 1, 0.5, Some(3)),
    (PromptId::QaTeacher, 0.3, 250, 1.0, 1, 0.5, Some(3)),
    (PromptId::QaFinal, 0.0, 100, 1.0, 5, 0.0, Some(1)),
    (PromptId::QaSim, 0.0, 100, 1.0, 1, 0.0, Some(1)),
];

#[test]
fn documented_parameter_table() {
    let reg = PromptRegistry::builtin();
    for &(id, temperature, max_tokens, top_p, n, fp, turns) in TABLE {
        let expected = GenerationParams {
            temperature,
            max_tokens,
            top_p,
            frequency_penalty: fp,
            num_completions: n,
            turn_budget: turns,
        };
        assert_eq!(reg.params_for(id).unwrap(), expected, "{id}");
    }
}

#[test]
fn every_prompt_is_registered_and_marked_reconstructed() {
    let reg = PromptRegistry::builtin();
    for &id in PromptId::ALL {
        let spec = reg.get(id).unwrap();
        assert_eq!(spec.source, PromptSource::Reconstructed, "{id}");
    }
    assert_eq!(reg.ids().count(), 20);
}

#[test]
fn qa_single_shot_wire_body() {
    let reg = PromptRegistry::builtin();
    let req = ChatRequest::single_user("gpt-4", PromptId::QaSingleShot, "Q?", reg.params_for(PromptId::QaSingleShot).unwrap());
    assert_eq!(
        req.to_wire_json(),
        r#"{"model":"gpt-4","messages":[{"role":"user","content":"Q?"}],"temperature":0.7,"top_p":1.0,"max_tokens":50,"frequency_penalty":0.0,"n":5}"#
    );
}

#[test]
fn summ_decider_wire_body() {
    let reg = PromptRegistry::builtin();
    let req = ChatRequest::single_user("gpt-4", PromptId::SummDecider, "line 1\n\"quoted\"", reg.params_for(PromptId::SummDecider).unwrap());
    assert_eq!(
        req.to_wire_json(),
        r#"{"model":"gpt-4","messages":[{"role":"user","content":"line 1\n\"quoted\""}],"temperature":1.0,"top_p":1.0,"max_tokens":512,"frequency_penalty":0.0,"n":1}"#
    );
}

#[test]
fn fingerprint_tracks_prompt_id_and_body() {
    let reg = PromptRegistry::builtin();
    let p = reg.params_for(PromptId::QaSim).unwrap();
    let a = ChatRequest::single_user("gpt-4", PromptId::QaSim, "x", p);
    let b = ChatRequest::single_user("gpt-4", PromptId::QaExact, "x", p);
    let c = ChatRequest::single_user("gpt-4", PromptId::QaSim, "x ", p);
    assert_eq!(a.fingerprint(), a.clone().fingerprint());
    assert_ne!(a.fingerprint(), b.fingerprint());
    assert_ne!(a.fingerprint(), c.fingerprint());
    assert_eq!(a.fingerprint().len(), 64);
}

#[test]
fn rendering_checks_variables() {
    let reg = PromptRegistry::builtin();
    let ok = reg.render(PromptId::QaSim, &vars([("predicted", "A"), ("gold", "B")])).unwrap();
    assert!(ok.contains("Generated answer: A\nGold answer: B"));
    assert!(reg.render(PromptId::QaSim, &vars([("predicted", "A")])).is_err());
    assert!(reg
        .render(PromptId::QaSim, &vars([("predicted", "A"), ("gold", "B"), ("extra", "C")]))
        .is_err());
    // Values are inserted verbatim, never rescanned for placeholders.
    let nested = reg.render(PromptId::QaSim, &vars([("predicted", "{{gold}}"), ("gold", "B")])).unwrap();
    assert!(nested.contains("Generated answer: {{gold}}"));
}
