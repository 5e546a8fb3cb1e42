use serde::{Deserialize, Serialize};

use super::{default_version, IngestError, StructuredSummary, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogTurn {
    pub speaker: Speaker,
    pub text: String,
}

/// A patient/provider chat with the demographics shown to the provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encounter {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub id: String,
    pub age: u32,
    pub sex: String,
    pub reason_for_visit: String,
    pub dialog: Vec<DialogTurn>,
    /// Ground-truth summary used by corruption experiments; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_summary: Option<StructuredSummary>,
}

impl Validate for Encounter {
    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.dialog.is_empty() {
            return Err(format!("encounter {}: dialog is empty", self.id));
        }
        Ok(())
    }

    fn format_version(&self) -> u32 {
        self.format_version
    }
}

impl Encounter {
    /// Text handed to prompts: demographics header, then one line per turn.
    pub fn render(&self) -> String {
        let mut out = format!(
            "Patient: {}-year-old {}\nReason for visit: {}\n",
            self.age, self.sex, self.reason_for_visit
        );
        for turn in &self.dialog {
            let who = match turn.speaker {
                Speaker::Patient => "Patient",
                Speaker::Provider => "Provider",
            };
            out.push('\n');
            out.push_str(who);
            out.push_str(": ");
            out.push_str(turn.text.trim());
        }
        out
    }

    pub fn unigram_count(&self) -> usize {
        self.dialog.iter().map(|t| t.text.split_whitespace().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl Spread {
    fn of(values: &[usize]) -> Self {
        let sum: usize = values.iter().sum();
        Self {
            mean: sum as f64 / values.len() as f64,
            min: *values.iter().min().expect("non-empty"),
            max: *values.iter().max().expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub encounters: usize,
    pub dialog_turns: Spread,
    /// Whitespace-delimited tokens over all dialog text of an encounter.
    pub unigram_tokens: Spread,
}

pub fn corpus_stats(encounters: &[Encounter]) -> Result<CorpusStats, IngestError> {
    if encounters.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let turns: Vec<usize> = encounters.iter().map(|e| e.dialog.len()).collect();
    let tokens: Vec<usize> = encounters.iter().map(Encounter::unigram_count).collect();
    Ok(CorpusStats {
        encounters: encounters.len(),
        dialog_turns: Spread::of(&turns),
        unigram_tokens: Spread::of(&tokens),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::parse_jsonl;

    fn enc(id: &str, turns: usize) -> Encounter {
        Encounter {
            format_version: 1,
            id: id.into(),
            age: 30,
            sex: "female".into(),
            reason_for_visit: "cough".into(),
            dialog: (0..turns)
                .map(|i| DialogTurn {
                    speaker: if i % 2 == 0 { Speaker::Provider } else { Speaker::Patient },
                    text: "two words".into(),
                })
                .collect(),
            reference_summary: None,
        }
    }

    #[test]
    fn stats_min_max_mean() {
        let s = corpus_stats(&[enc("a", 9), enc("b", 82)]).unwrap();
        assert_eq!((s.dialog_turns.min, s.dialog_turns.max), (9, 82));
        assert_eq!(s.dialog_turns.mean, 45.5);
        assert_eq!(s.unigram_tokens.max, 164);
    }

    #[test]
    fn single_encounter_stats_collapse() {
        let s = corpus_stats(&[enc("a", 27)]).unwrap();
        assert_eq!(s.dialog_turns.mean, 27.0);
        assert_eq!(s.dialog_turns.min, 27);
        assert_eq!(s.dialog_turns.max, 27);
        assert_eq!(corpus_stats(&[]), Err(IngestError::EmptyCorpus));
    }

    const LINE: &str = r#"{"id":"e1","age":34,"sex":"female","reason_for_visit":"UTI","dialog":[{"speaker":"provider","text":"Hi"},{"speaker":"patient","text":"It burns"}]}"#;

    #[test]
    fn loads_well_formed_lines() {
        let input = format!("{LINE}\n{}\n\n{}\n", LINE.replace("e1", "e2"), LINE.replace("e1", "e3"));
        let encs: Vec<Encounter> = parse_jsonl(input.as_bytes()).unwrap();
        assert_eq!(encs.len(), 3);
        assert_eq!(encs[2].id, "e3");
    }

    #[test]
    fn missing_field_reports_line() {
        let bad = LINE.replace(r#""sex":"female","#, "");
        let input = format!("{LINE}\n{bad}\n");
        match parse_jsonl::<Encounter>(input.as_bytes()) {
            Err(IngestError::Record { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("missing field `sex`"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_speaker_is_rejected() {
        let bad = LINE.replace(r#""speaker":"patient""#, r#""speaker":"nurse""#);
        let err = parse_jsonl::<Encounter>(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, IngestError::Record { line: 1, ref reason } if reason.contains("nurse")));
    }

    #[test]
    fn empty_dialog_and_bad_version_are_rejected() {
        let empty = LINE.replace(
            r#"[{"speaker":"provider","text":"Hi"},{"speaker":"patient","text":"It burns"}]"#,
            "[]",
        );
        assert!(parse_jsonl::<Encounter>(empty.as_bytes()).is_err());
        let v2 = LINE.replacen('{', r#"{"format_version":2,"#, 1);
        assert!(parse_jsonl::<Encounter>(v2.as_bytes()).is_err());
    }

    #[test]
    fn render_lists_turns() {
        let text = enc("a", 2).render();
        assert!(text.starts_with("Patient: 30-year-old female\nReason for visit: cough\n"));
        assert!(text.ends_with("Provider: two words\nPatient: two words"));
    }
}
