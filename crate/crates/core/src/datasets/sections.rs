//! Section-keyed documents and their plain-text form.
//!
//! Text form is one header line per section (`Medical Intent:`), followed by
//! the section body. Content may also start on the header line itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::default_version;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SectionParseError {
    #[error("section `{0}` is missing")]
    MissingSection(&'static str),
    #[error("section `{0}` appears twice")]
    DuplicateSection(&'static str),
}

fn strip_header_decoration(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['#', '*', ' '])
        .trim_end_matches(['*', ' '])
}

/// Splits `text` into one body per header, in `headers` order.
fn parse_sections(text: &str, headers: &[&'static str]) -> Result<Vec<String>, SectionParseError> {
    let lowered: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    let mut bodies: Vec<Option<Vec<String>>> = vec![None; headers.len()];
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let stripped = strip_header_decoration(line);
        // ASCII lowercasing keeps byte offsets aligned with `stripped`.
        let lower = stripped.to_ascii_lowercase();
        let hit = lowered
            .iter()
            .position(|h| lower.strip_prefix(h.as_str()).is_some_and(|r| r.starts_with(':')));
        match hit {
            Some(i) => {
                if bodies[i].is_some() {
                    return Err(SectionParseError::DuplicateSection(headers[i]));
                }
                let inline = stripped[lowered[i].len() + 1..].trim_start_matches(['*', ' ']).trim();
                let mut body = Vec::new();
                if !inline.is_empty() {
                    body.push(inline.to_string());
                }
                bodies[i] = Some(body);
                current = Some(i);
            }
            None => {
                if let Some(i) = current {
                    bodies[i].as_mut().expect("current section open").push(line.to_string());
                }
            }
        }
    }
    bodies
        .into_iter()
        .zip(headers)
        .map(|(body, header)| {
            let body = body.ok_or(SectionParseError::MissingSection(header))?;
            Ok(body.join("\n").trim().to_string())
        })
        .collect()
}

fn render_sections<'a>(parts: impl Iterator<Item = (&'static str, &'a str)>) -> String {
    parts
        .map(|(header, body)| {
            if body.trim().is_empty() {
                format!("{header}:\n")
            } else {
                format!("{header}:\n{}\n", body.trim())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySection {
    DemographicsSocial,
    MedicalIntent,
    PertinentPositives,
    PertinentNegatives,
    PertinentUnknowns,
    MedicalHistory,
}

impl SummarySection {
    pub const ALL: [SummarySection; 6] = [
        SummarySection::DemographicsSocial,
        SummarySection::MedicalIntent,
        SummarySection::PertinentPositives,
        SummarySection::PertinentNegatives,
        SummarySection::PertinentUnknowns,
        SummarySection::MedicalHistory,
    ];

    pub fn key(self) -> &'static str {
        match self {
            SummarySection::DemographicsSocial => "demographics_social",
            SummarySection::MedicalIntent => "medical_intent",
            SummarySection::PertinentPositives => "pertinent_positives",
            SummarySection::PertinentNegatives => "pertinent_negatives",
            SummarySection::PertinentUnknowns => "pertinent_unknowns",
            SummarySection::MedicalHistory => "medical_history",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            SummarySection::DemographicsSocial => "Demographics and Social Determinants of Health",
            SummarySection::MedicalIntent => "Medical Intent",
            SummarySection::PertinentPositives => "Pertinent Positives",
            SummarySection::PertinentNegatives => "Pertinent Negatives",
            SummarySection::PertinentUnknowns => "Pertinent Unknowns",
            SummarySection::MedicalHistory => "Medical History",
        }
    }
}

/// Six-section encounter summary. Sections may be empty strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSummary {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub demographics_social: String,
    pub medical_intent: String,
    pub pertinent_positives: String,
    pub pertinent_negatives: String,
    pub pertinent_unknowns: String,
    pub medical_history: String,
}

impl Default for StructuredSummary {
    fn default() -> Self {
        Self {
            format_version: default_version(),
            demographics_social: String::new(),
            medical_intent: String::new(),
            pertinent_positives: String::new(),
            pertinent_negatives: String::new(),
            pertinent_unknowns: String::new(),
            medical_history: String::new(),
        }
    }
}

impl StructuredSummary {
    pub fn get(&self, section: SummarySection) -> &str {
        match section {
            SummarySection::DemographicsSocial => &self.demographics_social,
            SummarySection::MedicalIntent => &self.medical_intent,
            SummarySection::PertinentPositives => &self.pertinent_positives,
            SummarySection::PertinentNegatives => &self.pertinent_negatives,
            SummarySection::PertinentUnknowns => &self.pertinent_unknowns,
            SummarySection::MedicalHistory => &self.medical_history,
        }
    }

    pub fn get_mut(&mut self, section: SummarySection) -> &mut String {
        match section {
            SummarySection::DemographicsSocial => &mut self.demographics_social,
            SummarySection::MedicalIntent => &mut self.medical_intent,
            SummarySection::PertinentPositives => &mut self.pertinent_positives,
            SummarySection::PertinentNegatives => &mut self.pertinent_negatives,
            SummarySection::PertinentUnknowns => &mut self.pertinent_unknowns,
            SummarySection::MedicalHistory => &mut self.medical_history,
        }
    }

    pub fn sections(&self) -> impl Iterator<Item = (SummarySection, &str)> {
        SummarySection::ALL.into_iter().map(move |s| (s, self.get(s)))
    }

    pub fn is_empty(&self) -> bool {
        self.sections().all(|(_, body)| body.trim().is_empty())
    }

    pub fn to_text(&self) -> String {
        render_sections(self.sections().map(|(s, body)| (s.header(), body)))
    }

    pub fn parse_text(text: &str) -> Result<Self, SectionParseError> {
        let headers = SummarySection::ALL.map(SummarySection::header);
        let bodies = parse_sections(text, &headers)?;
        let mut out = Self::default();
        for (section, body) in SummarySection::ALL.into_iter().zip(bodies) {
            *out.get_mut(section) = body;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarePlanSection {
    Medications,
    Referrals,
    Tests,
    Lifestyle,
    SupportiveCare,
}

impl CarePlanSection {
    pub const ALL: [CarePlanSection; 5] = [
        CarePlanSection::Medications,
        CarePlanSection::Referrals,
        CarePlanSection::Tests,
        CarePlanSection::Lifestyle,
        CarePlanSection::SupportiveCare,
    ];

    pub fn key(self) -> &'static str {
        match self {
            CarePlanSection::Medications => "medications",
            CarePlanSection::Referrals => "referrals",
            CarePlanSection::Tests => "tests",
            CarePlanSection::Lifestyle => "lifestyle",
            CarePlanSection::SupportiveCare => "supportive_care",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            CarePlanSection::Medications => "Medications",
            CarePlanSection::Referrals => "Referrals",
            CarePlanSection::Tests => "Tests",
            CarePlanSection::Lifestyle => "Lifestyle",
            CarePlanSection::SupportiveCare => "Supportive Care",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarePlan {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub medications: String,
    pub referrals: String,
    pub tests: String,
    pub lifestyle: String,
    pub supportive_care: String,
}

impl CarePlan {
    pub fn get(&self, section: CarePlanSection) -> &str {
        match section {
            CarePlanSection::Medications => &self.medications,
            CarePlanSection::Referrals => &self.referrals,
            CarePlanSection::Tests => &self.tests,
            CarePlanSection::Lifestyle => &self.lifestyle,
            CarePlanSection::SupportiveCare => &self.supportive_care,
        }
    }

    pub fn sections(&self) -> impl Iterator<Item = (CarePlanSection, &str)> {
        CarePlanSection::ALL.into_iter().map(move |s| (s, self.get(s)))
    }

    pub fn to_text(&self) -> String {
        render_sections(self.sections().map(|(s, body)| (s.header(), body)))
    }

    pub fn parse_text(text: &str) -> Result<Self, SectionParseError> {
        let headers = CarePlanSection::ALL.map(CarePlanSection::header);
        let mut bodies = parse_sections(text, &headers)?.into_iter();
        let mut next = || bodies.next().expect("five bodies");
        Ok(Self {
            format_version: default_version(),
            medications: next(),
            referrals: next(),
            tests: next(),
            lifestyle: next(),
            supportive_care: next(),
        })
    }
}
