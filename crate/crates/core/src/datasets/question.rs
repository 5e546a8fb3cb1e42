use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{default_version, Validate};

/// Areas reserved for the NEJM development split.
pub const NEJM_DEV_AREAS: [&str; 7] = [
    "Reproductive",
    "Gastrointestinal",
    "Neurologic/Psychogenic",
    "Special Sensory",
    "Endocrine",
    "Musculoskeletal",
    "Maternity Care",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamQuestion {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub id: String,
    pub stem: String,
    /// Option letter to option text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_letter: Option<String>,
    pub gold_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_ended_stem: Option<String>,
}

impl Validate for ExamQuestion {
    fn validate(&self) -> Result<(), String> {
        if self.stem.trim().is_empty() {
            return Err(format!("question {}: empty stem", self.id));
        }
        if let Some(options) = &self.options {
            if let Some(bad) = options.keys().find(|k| !is_option_letter(k)) {
                return Err(format!("question {}: option key `{bad}` is not a single letter", self.id));
            }
            let gold = self
                .gold_letter
                .as_deref()
                .ok_or_else(|| format!("question {}: options given without gold_letter", self.id))?;
            match options.get(gold) {
                None => return Err(format!("question {}: gold_letter `{gold}` not among options", self.id)),
                Some(text) if *text != self.gold_text => {
                    return Err(format!("question {}: options[{gold}] does not equal gold_text", self.id))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn format_version(&self) -> u32 {
        self.format_version
    }
}

fn is_option_letter(key: &str) -> bool {
    key.len() == 1 && key.bytes().all(|b| b.is_ascii_uppercase())
}

impl ExamQuestion {
    /// The stem the model should answer: the open-ended rewrite when present.
    pub fn prompt_stem(&self) -> &str {
        self.open_ended_stem.as_deref().unwrap_or(&self.stem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("question {0} has no area")]
    MissingArea(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub dev: Vec<ExamQuestion>,
    pub test: Vec<ExamQuestion>,
}

impl Split {
    pub fn manifest(&self, dev_areas: &BTreeSet<String>, seed: Option<u64>) -> SplitManifest {
        SplitManifest {
            format_version: default_version(),
            seed,
            dev_areas: dev_areas.iter().cloned().collect(),
            dev: self.dev.iter().map(|q| q.id.clone()).collect(),
            test: self.test.iter().map(|q| q.id.clone()).collect(),
        }
    }
}

/// Ids on each side of a split, plus what produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub dev_areas: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// A question goes to dev iff its area is one of `dev_areas`. Order is kept.
pub fn split_by_area(questions: &[ExamQuestion], dev_areas: &BTreeSet<String>) -> Result<Split, SplitError> {
    let mut split = Split {
        dev: Vec::new(),
        test: Vec::new(),
    };
    for q in questions {
        let area = q.area.as_deref().ok_or_else(|| SplitError::MissingArea(q.id.clone()))?;
        if dev_areas.contains(area) {
            split.dev.push(q.clone());
        } else {
            split.test.push(q.clone());
        }
    }
    Ok(split)
}

/// Uniform sample of `k` questions without replacement, in corpus order.
pub fn sample_questions(questions: &[ExamQuestion], k: usize, seed: u64) -> Vec<ExamQuestion> {
    let k = k.min(questions.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, questions.len(), k).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| questions[i].clone()).collect()
}
