//! Scripted oracle backends for tests.
//!
//! Oracles read the tagged blocks of rendered catalog prompts (`<text>`,
//! `<summary>`, ...) and answer the way an ideal model would under an exact
//! set semantics for concepts: a section's concepts are its `; `-separated
//! findings, compared case-insensitively.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use dera::backend::{BackendError, ChatBackend, ChatRequest, ScriptedBackend};
use dera::backend::{Cassette, CassetteEntry};
use dera::client::PromptClient;
use dera::datasets::{DialogTurn, Encounter, ExamQuestion, Speaker, StructuredSummary, SummarySection};
use dera::orchestrator::{Dera, QaMode, RunLog};
use dera::prompts::PromptId;

/// Body of `<name>...</name>` in a rendered prompt.
pub fn tag<'a>(prompt: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("<{name}>\n");
    let close = format!("\n</{name}>");
    let start = prompt.find(&open)? + open.len();
    let len = prompt[start..].find(&close)?;
    Some(&prompt[start..start + len])
}

/// Findings of a section body, split on `;` and newlines.
pub fn section_concepts(text: &str) -> Vec<String> {
    text.split([';', '\n'])
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(String::from)
        .collect()
}

fn key(c: &str) -> String {
    c.trim().to_lowercase()
}

fn dedup(items: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    items.iter().filter(|c| seen.insert(key(c))).cloned().collect()
}

/// Set-based recall, precision and F1, with the same degenerate-case rules
/// as the model-mediated metric: both sets empty scores 1, any other zero
/// denominator scores 0.
pub fn brute_force_f1(ground_truth: &[String], predicted: &[String]) -> (f64, f64, f64) {
    let gt = dedup(ground_truth);
    let pred = dedup(predicted);
    if gt.is_empty() && pred.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    let pred_keys: HashSet<String> = pred.iter().map(|c| key(c)).collect();
    let gt_keys: HashSet<String> = gt.iter().map(|c| key(c)).collect();
    let tp_gt = gt.iter().filter(|c| pred_keys.contains(&key(c))).count();
    let tp_pred = pred.iter().filter(|c| gt_keys.contains(&key(c))).count();
    let recall = if gt.is_empty() { 0.0 } else { tp_gt as f64 / gt.len() as f64 };
    let precision = if pred.is_empty() { 0.0 } else { tp_pred as f64 / pred.len() as f64 };
    let f1 = if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (recall, precision, f1)
}

/// Micro-averaged set F1 over the six summary sections.
pub fn brute_force_summary_f1(ground_truth: &StructuredSummary, predicted: &StructuredSummary) -> f64 {
    let (mut tp_gt, mut n_gt, mut tp_pred, mut n_pred) = (0, 0, 0, 0);
    for s in SummarySection::ALL {
        let gt = dedup(&section_concepts(ground_truth.get(s)));
        let pred = dedup(&section_concepts(predicted.get(s)));
        let pk: HashSet<_> = pred.iter().map(|c| key(c)).collect();
        let gk: HashSet<_> = gt.iter().map(|c| key(c)).collect();
        tp_gt += gt.iter().filter(|c| pk.contains(&key(c))).count();
        tp_pred += pred.iter().filter(|c| gk.contains(&key(c))).count();
        n_gt += gt.len();
        n_pred += pred.len();
    }
    if n_gt == 0 && n_pred == 0 {
        return 1.0;
    }
    let r = if n_gt == 0 { 0.0 } else { tp_gt as f64 / n_gt as f64 };
    let p = if n_pred == 0 { 0.0 } else { tp_pred as f64 / n_pred as f64 };
    if r + p == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Most frequent form, earliest first occurrence on ties, by exhaustive
/// counting.
pub fn brute_force_vote(ballot: &[String]) -> Option<String> {
    let mut best: Option<(usize, &String)> = None;
    for (i, candidate) in ballot.iter().enumerate() {
        let form = candidate.trim();
        if ballot[..i].iter().any(|b| b.trim() == form) {
            continue;
        }
        let count = ballot.iter().filter(|b| b.trim() == form).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, candidate));
        }
    }
    best.map(|(_, s)| s.trim().to_string())
}

/// Ground-truth concepts as `(section, concept)` in section order.
pub fn summary_concepts(summary: &StructuredSummary) -> Vec<(SummarySection, String)> {
    SummarySection::ALL
        .into_iter()
        .flat_map(|s| section_concepts(summary.get(s)).into_iter().map(move |c| (s, c)))
        .collect()
}

fn summary_from(concepts: &[(SummarySection, String)]) -> StructuredSummary {
    let mut out = StructuredSummary::default();
    for s in SummarySection::ALL {
        *out.get_mut(s) = concepts
            .iter()
            .filter(|(sec, _)| *sec == s)
            .map(|(_, c)| c.as_str())
            .collect::<Vec<_>>()
            .join("; ");
    }
    out
}

/// Deletes the last ⌈level/10 × n⌉ of the summary's n concepts. Deletions at
/// a higher level are a superset of those at a lower one.
pub fn delete_concepts(summary: &StructuredSummary, level: u32) -> StructuredSummary {
    let concepts = summary_concepts(summary);
    let n = concepts.len();
    let k = (level as usize * n).div_ceil(10).min(n);
    summary_from(&concepts[..n - k])
}

fn corruption_level(prompt: &str) -> Option<u32> {
    let rest = &prompt[prompt.find("corruption level is ")? + "corruption level is ".len()..];
    rest.split_whitespace().next()?.parse().ok()
}

/// Parses `Header: concept` into its section.
fn parse_suggestion(line: &str) -> Option<(SummarySection, String)> {
    SummarySection::ALL.into_iter().find_map(|s| {
        let rest = line.trim().strip_prefix(s.header())?.strip_prefix(':')?;
        let concept = rest.trim();
        (!concept.is_empty()).then(|| (s, concept.to_string()))
    })
}

fn suggestion(section: SummarySection, concept: &str) -> String {
    format!("{}: {}", section.header(), concept)
}

fn scratchpad_entries(rendered: &str) -> Vec<String> {
    rendered
        .lines()
        .filter_map(|l| {
            let l = l.trim();
            let digits = l.bytes().take_while(u8::is_ascii_digit).count();
            (digits > 0).then(|| l[digits..].trim_start_matches(". ").to_string())
        })
        .collect()
}

/// Content of the last Researcher message in a rendered conversation.
fn last_researcher_message(conversation: &str) -> Option<&str> {
    conversation
        .split("\n\n")
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .find_map(|block| block.strip_prefix("Researcher: "))
}

/// Answers metric, corruption, summarization and repair prompts as an ideal
/// model would. Ground truth for an encounter is looked up by its rendered
/// text.
#[derive(Debug, Default)]
pub struct OracleBackend {
    truths: HashMap<String, StructuredSummary>,
    calls: Mutex<BTreeMap<&'static str, usize>>,
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_truths<'a>(pairs: impl IntoIterator<Item = (&'a Encounter, &'a StructuredSummary)>) -> Self {
        Self {
            truths: pairs.into_iter().map(|(e, s)| (e.render(), s.clone())).collect(),
            calls: Mutex::default(),
        }
    }

    /// Calls served so far, per prompt id.
    pub fn calls(&self) -> BTreeMap<&'static str, usize> {
        self.calls.lock().unwrap().clone()
    }

    pub fn total_calls(&self) -> usize {
        self.calls.lock().unwrap().values().sum()
    }

    fn missing(&self, prompt: &str) -> Option<Vec<String>> {
        let truth = self.truths.get(tag(prompt, "encounter")?)?;
        let draft = StructuredSummary::parse_text(tag(prompt, "summary")?).ok()?;
        let noted: HashSet<String> = scratchpad_entries(tag(prompt, "scratchpad")?)
            .iter()
            .map(|e| key(e))
            .collect();
        Some(
            summary_concepts(truth)
                .into_iter()
                .filter(|(s, c)| {
                    let present = section_concepts(draft.get(*s)).iter().any(|d| key(d) == key(c));
                    !present && !noted.contains(&key(&suggestion(*s, c)))
                })
                .map(|(s, c)| suggestion(s, &c))
                .collect(),
        )
    }

    fn reply(&self, id: PromptId, prompt: &str) -> Result<String, String> {
        let need = |name: &str| tag(prompt, name).ok_or_else(|| format!("{id}: no <{name}> block"));
        match id {
            PromptId::MetricExtractor => Ok(dedup(&section_concepts(need("text")?)).join("\n")),
            PromptId::MetricVerifier => {
                let have: HashSet<String> = section_concepts(need("text")?).iter().map(|c| key(c)).collect();
                Ok(scratchpad_entries(need("concepts")?)
                    .iter()
                    .map(|c| if have.contains(&key(c)) { "present" } else { "absent" })
                    .collect::<Vec<_>>()
                    .join("\n"))
            }
            PromptId::SummCorruption => {
                let level = corruption_level(prompt).ok_or("no corruption level")?;
                let source = StructuredSummary::parse_text(need("summary")?).map_err(|e| e.to_string())?;
                Ok(delete_concepts(&source, level).to_text())
            }
            PromptId::SummInitial => self
                .truths
                .get(need("encounter")?)
                .map(StructuredSummary::to_text)
                .ok_or_else(|| "unknown encounter".to_string()),
            PromptId::SummResearcher => {
                let missing = self.missing(prompt).ok_or("researcher prompt lacks context")?;
                if missing.is_empty() {
                    Ok("[DONE]".to_string())
                } else {
                    Ok(missing.join("\n"))
                }
            }
            PromptId::SummDecider => {
                let point = last_researcher_message(need("conversation")?).ok_or("no researcher message")?;
                let lines: Vec<String> = point
                    .lines()
                    .map(|l| match parse_suggestion(l) {
                        Some((s, c)) => format!("ACCEPT: {}", suggestion(s, &c)),
                        None => format!("REJECT: not a section finding: {}", l.trim()),
                    })
                    .collect();
                Ok(lines.join("\n"))
            }
            PromptId::SummFinal => {
                let draft = StructuredSummary::parse_text(need("summary")?).map_err(|e| e.to_string())?;
                let mut concepts = summary_concepts(&draft);
                for entry in scratchpad_entries(need("scratchpad")?) {
                    if let Some(found) = parse_suggestion(&entry) {
                        if !concepts.iter().any(|(s, c)| *s == found.0 && key(c) == key(&found.1)) {
                            concepts.push(found);
                        }
                    }
                }
                Ok(summary_from(&concepts).to_text())
            }
            other => Err(format!("no oracle for {other}")),
        }
    }
}

impl ChatBackend for OracleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        let id = request.prompt_id.ok_or_else(|| BackendError::Rejected {
            status: 400,
            body: "oracle needs a catalog prompt".into(),
        })?;
        *self.calls.lock().unwrap().entry(id.as_str()).or_default() += 1;
        let reply = self
            .reply(id, &request.text())
            .map_err(|body| BackendError::Rejected { status: 400, body })?;
        Ok(vec![reply; request.params.num_completions as usize])
    }
}

const POSITIVES: [&str; 12] = [
    "burning with urination",
    "urinary frequency",
    "lower abdominal pain",
    "fever",
    "fatigue",
    "dry cough",
    "sore throat",
    "headache",
    "nausea",
    "chills",
    "rash on forearm",
    "joint stiffness",
];
const NEGATIVES: [&str; 8] = [
    "no blood in urine",
    "no vomiting",
    "no chest pain",
    "no shortness of breath",
    "no back pain",
    "no vaginal discharge",
    "no diarrhea",
    "no recent travel",
];
const UNKNOWNS: [&str; 5] = [
    "duration of symptoms",
    "sexual activity",
    "pregnancy status",
    "fluid intake",
    "sick contacts",
];
const HISTORY: [&str; 7] = [
    "prior urinary tract infection",
    "seasonal allergies",
    "hypertension",
    "penicillin allergy",
    "asthma",
    "appendectomy",
    "type 2 diabetes",
];
const INTENTS: [&str; 5] = [
    "evaluation of urinary symptoms",
    "evaluation of cough",
    "evaluation of rash",
    "evaluation of headache",
    "evaluation of fatigue",
];

fn pick<'a>(pool: &[&'a str], start: usize, count: usize) -> Vec<&'a str> {
    (0..count).map(|j| pool[(start + j) % pool.len()]).collect()
}

/// Deterministic synthetic encounters with reference summaries of 9 to 17
/// concepts.
pub fn fixture_encounters(n: usize) -> Vec<Encounter> {
    (0..n)
        .map(|i| {
            let positives = pick(&POSITIVES, i * 5, 2 + i % 4);
            let negatives = pick(&NEGATIVES, i * 3, 1 + i % 3);
            let unknowns = pick(&UNKNOWNS, i, 1 + i % 2);
            let history = pick(&HISTORY, i * 2, 1 + (i + 1) % 3);
            let age = 20 + (i as u32 * 7) % 50;
            let sex = if i % 2 == 0 { "female" } else { "male" };
            let summary = StructuredSummary {
                demographics_social: format!("{age}-year-old {sex}; lives alone"),
                medical_intent: INTENTS[i % INTENTS.len()].to_string(),
                pertinent_positives: positives.join("; "),
                pertinent_negatives: negatives.join("; "),
                pertinent_unknowns: unknowns.join("; "),
                medical_history: history.join("; "),
                ..StructuredSummary::default()
            };
            let mut dialog = vec![
                DialogTurn {
                    speaker: Speaker::Provider,
                    text: "What brings you in today?".into(),
                },
                DialogTurn {
                    speaker: Speaker::Patient,
                    text: format!("I have {}.", positives.join(" and ")),
                },
            ];
            dialog.push(DialogTurn {
                speaker: Speaker::Provider,
                text: "Anything else I should know?".into(),
            });
            dialog.push(DialogTurn {
                speaker: Speaker::Patient,
                text: format!("{}. I have a history of {}.", negatives.join(", "), history.join(" and ")),
            });
            Encounter {
                format_version: 1,
                id: format!("enc-{i:03}"),
                age,
                sex: sex.into(),
                reason_for_visit: INTENTS[i % INTENTS.len()].to_string(),
                dialog,
                reference_summary: Some(summary),
            }
        })
        .collect()
}

pub const ID574_STEM: &str = "Your colleague has been reading the literature on beta-carotene supplementation and the risk of heart disease. She thinks they may share a clinically relevant association and would like to submit an editorial to a top journal. Upon final literature review, she discovers a newly published study that refutes any association between beta-carotene and heart disease. Your colleague is upset; you suggest that she, instead, mathematically pool the results from all of the studies on this topic and publish the findings. What type of study design are you recommending to your colleague?";

pub fn id574_question() -> ExamQuestion {
    ExamQuestion {
        format_version: 1,
        id: "574".into(),
        stem: ID574_STEM.into(),
        options: None,
        gold_letter: None,
        gold_text: "Meta-analysis".into(),
        area: None,
        open_ended_stem: None,
    }
}

const ID574_DIALOG: [&str; 7] = [
    "Both options are viable for pooling results from multiple studies, but a meta-analysis (80%) is more likely to be recommended as it allows for a quantitative synthesis of the data. A systematic review and meta-analysis (20%) would also be a good option, as it includes a comprehensive literature search and qualitative analysis, but it may be more time-consuming. Ultimately, the choice depends on the specific goals and resources of the researcher.",
    "Consider the fact that your colleague wants to 'mathematically pool the results from all of the studies on this topic' and think about which study design would best allow for this type of analysis.",
    "Based on the fact that my colleague wants to mathematically pool the results from all of the studies, I believe a meta-analysis would be the best study design as it allows for a quantitative synthesis of the data.\nANSWER: Meta-analysis",
    "Think about the goal of your colleague, which is to 'submit an editorial to a top journal' and consider which study design would be most appropriate for achieving this goal.",
    "After considering the goal of my colleague to submit an editorial to a top journal, I believe a systematic review and meta-analysis would be the most appropriate study design. This design includes both a comprehensive literature search and qualitative analysis, in addition to the quantitative synthesis of data, which would make it more suitable for publication in a top journal.\nANSWER: Systematic review and meta-analysis",
    "Consider the fact that your colleague discovered a 'newly published study that refutes any association between beta-carotene and heart disease' and think about how this might impact the choice of study design.",
    "After considering the fact that my colleague discovered a newly published study that refutes any association between beta-carotene and heart disease, I still believe a systematic review and meta-analysis would be the most appropriate study design. This design would allow for the inclusion of this new study in the comprehensive literature search and analysis, providing a more complete picture of the current state of research on this topic.\nANSWER: Systematic review and meta-analysis",
];

/// Replies for the ID-574 flow, in call order. The dialog is the reference
/// transcript with an `ANSWER:` line added to each Decider turn; the five
/// single-shot and five final samples are chosen to give the reference
/// vote split and final answer.
pub fn id574_script() -> Vec<Vec<String>> {
    let ma = "Meta-analysis";
    let sr = "Systematic review and meta-analysis";
    let mut script = vec![vec![ma, ma, sr, ma, ma].into_iter().map(String::from).collect()];
    script.extend(ID574_DIALOG.iter().map(|m| vec![m.to_string()]));
    script.push(vec![sr, sr, ma, sr, sr].into_iter().map(String::from).collect());
    script
}

/// Cassette for the ID-574 flow under the built-in catalog and `model`,
/// built by driving the pipeline over [`id574_script`] and pairing each
/// request with its scripted reply.
pub fn id574_cassette(model: &str) -> Cassette {
    let script = Arc::new(ScriptedBackend::new(id574_script()));
    let client = PromptClient::with_builtin_prompts(Arc::clone(&script)).model(model);
    Dera::new(client)
        .run_qa(&id574_question(), QaMode::OpenEnded, &mut RunLog::new("574"))
        .expect("id 574 script drives a full run");
    let entries = script
        .requests()
        .iter()
        .zip(id574_script())
        .map(|(req, completions)| CassetteEntry::new(req, completions))
        .collect();
    Cassette { entries }
}
