//! Model-mediated evaluation: GPT-F1 over extracted medical concepts, and
//! the similarity and exact-match answer judges.
//!
//! GPT-Recall verifies ground-truth concepts against the predicted text,
//! GPT-Precision verifies predicted concepts against the ground truth, and
//! GPT-F1 is their harmonic mean.

mod judges;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{CallError, PromptClient};
use crate::datasets::StructuredSummary;
use crate::prompts::{vars, PromptId};

pub use judges::{clamp_similarity_batch, parse_exact_verdict, parse_similarity, ExactMatch};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("verifier returned {got} verdicts for {expected} concepts")]
    VerifierShapeError { expected: usize, got: usize },
    #[error("verifier line `{0}` is neither `present` nor `absent`")]
    VerifierVocabulary(String),
    #[error("similarity reply `{0}` is not a number")]
    SimilarityParseError(String),
    #[error("exact-match reply has no leading Yes/No verdict: `{0}`")]
    JudgeParseError(String),
    #[error(transparent)]
    Call(#[from] CallError),
}

/// Concepts in extraction order, without case-insensitive repeats.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptSet {
    concepts: Vec<String>,
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim();
        }
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    line
}

impl ConceptSet {
    pub fn new<I, S>(concepts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let concepts = concepts
            .into_iter()
            .map(|c| c.as_ref().trim().to_string())
            .filter(|c| !c.is_empty() && seen.insert(c.to_lowercase()))
            .collect();
        Self { concepts }
    }

    /// One concept per line; list bullets and numbering are dropped.
    pub fn from_lines(text: &str) -> Self {
        Self::new(text.lines().map(strip_list_marker))
    }

    pub fn as_slice(&self) -> &[String] {
        &self.concepts
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    fn numbered(&self) -> String {
        self.concepts
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {}", i + 1, c))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Verifier reply, one `present`/`absent` per non-blank line.
pub fn parse_verdicts(reply: &str, expected: usize) -> Result<Vec<bool>, MetricsError> {
    let verdicts = reply
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .map(|l| match l.trim_end_matches(['.', ',']).to_ascii_lowercase().as_str() {
            "present" => Ok(true),
            "absent" => Ok(false),
            _ => Err(MetricsError::VerifierVocabulary(l.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if verdicts.len() != expected {
        return Err(MetricsError::VerifierShapeError {
            expected,
            got: verdicts.len(),
        });
    }
    Ok(verdicts)
}

/// Counts and scores for one section or a whole document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp_gt: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp_pred: usize,
    pub fp: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Harmonic mean; zero when either input is zero.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision <= 0.0 || recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl MetricReport {
    /// Both concept sets empty scores 1 across the board; otherwise a ratio
    /// with a zero denominator is 0.
    pub fn from_counts(tp_gt: usize, fn_: usize, tp_pred: usize, fp: usize) -> Self {
        let gt_total = tp_gt + fn_;
        let pred_total = tp_pred + fp;
        let (recall, precision, f1) = if gt_total == 0 && pred_total == 0 {
            (1.0, 1.0, 1.0)
        } else {
            let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            let recall = ratio(tp_gt, gt_total);
            let precision = ratio(tp_pred, pred_total);
            (recall, precision, harmonic_f1(precision, recall))
        };
        Self {
            tp_gt,
            fn_,
            tp_pred,
            fp,
            recall,
            precision,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum counts over sections, then score.
    #[default]
    Micro,
    /// Score each section, then average the scores.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub section: String,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub sections: Vec<SectionReport>,
    /// Document-level scores under `aggregation`. Counts are always summed.
    pub overall: MetricReport,
    pub aggregation: Aggregation,
}

pub fn aggregate(sections: Vec<SectionReport>, aggregation: Aggregation) -> DocumentReport {
    let (tp_gt, fn_, tp_pred, fp) = sections.iter().fold((0, 0, 0, 0), |acc, s| {
        let c = s.report;
        (acc.0 + c.tp_gt, acc.1 + c.fn_, acc.2 + c.tp_pred, acc.3 + c.fp)
    });
    let mut overall = MetricReport::from_counts(tp_gt, fn_, tp_pred, fp);
    if aggregation == Aggregation::Macro && !sections.is_empty() {
        let n = sections.len() as f64;
        overall.recall = sections.iter().map(|s| s.report.recall).sum::<f64>() / n;
        overall.precision = sections.iter().map(|s| s.report.precision).sum::<f64>() / n;
        overall.f1 = sections.iter().map(|s| s.report.f1).sum::<f64>() / n;
    }
    DocumentReport {
        sections,
        overall,
        aggregation,
    }
}

/// One line of a score report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub doc_id: String,
    pub section: String,
    #[serde(flatten)]
    pub report: MetricReport,
}

impl DocumentReport {
    /// Per-section rows followed by a `document` row.
    pub fn rows(&self, doc_id: &str) -> Vec<ScoreRow> {
        self.sections
            .iter()
            .map(|s| ScoreRow {
                doc_id: doc_id.to_string(),
                section: s.section.clone(),
                report: s.report,
            })
            .chain(std::iter::once(ScoreRow {
                doc_id: doc_id.to_string(),
                section: "document".to_string(),
                report: self.overall,
            }))
            .collect()
    }
}

/// Runs the metric prompts against a backend.
#[derive(Debug, Clone)]
pub struct Scorer {
    client: PromptClient,
    aggregation: Aggregation,
}

impl Scorer {
    pub fn new(client: PromptClient) -> Self {
        Self {
            client,
            aggregation: Aggregation::Micro,
        }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn extract_concepts(&self, section_text: &str) -> Result<ConceptSet, MetricsError> {
        if section_text.trim().is_empty() {
            return Ok(ConceptSet::default());
        }
        let call = self
            .client
            .call(PromptId::MetricExtractor, &vars([("text", section_text)]))?;
        Ok(ConceptSet::from_lines(call.first()))
    }

    /// One verdict per concept, positionally aligned.
    pub fn verify_concepts(&self, concepts: &ConceptSet, against_text: &str) -> Result<Vec<bool>, MetricsError> {
        if concepts.is_empty() {
            return Ok(Vec::new());
        }
        let call = self.client.call(
            PromptId::MetricVerifier,
            &vars([("concepts", concepts.numbered().as_str()), ("text", against_text)]),
        )?;
        parse_verdicts(call.first(), concepts.len())
    }

    pub fn gpt_f1(&self, ground_truth_section: &str, predicted_section: &str) -> Result<MetricReport, MetricsError> {
        let gt = self.extract_concepts(ground_truth_section)?;
        let pred = self.extract_concepts(predicted_section)?;
        let recall_hits = self.verify_concepts(&gt, predicted_section)?;
        let precision_hits = self.verify_concepts(&pred, ground_truth_section)?;
        let tp_gt = recall_hits.iter().filter(|v| **v).count();
        let tp_pred = precision_hits.iter().filter(|v| **v).count();
        Ok(MetricReport::from_counts(
            tp_gt,
            gt.len() - tp_gt,
            tp_pred,
            pred.len() - tp_pred,
        ))
    }

    /// GPT-F1 over `(section name, ground truth, prediction)` triples.
    pub fn gpt_f1_sections<'a>(
        &self,
        sections: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    ) -> Result<DocumentReport, MetricsError> {
        let reports = sections
            .into_iter()
            .map(|(name, gt, pred)| {
                Ok(SectionReport {
                    section: name.to_string(),
                    report: self.gpt_f1(gt, pred)?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Ok(aggregate(reports, self.aggregation))
    }

    pub fn gpt_f1_summary(
        &self,
        ground_truth: &StructuredSummary,
        predicted: &StructuredSummary,
    ) -> Result<DocumentReport, MetricsError> {
        self.gpt_f1_sections(
            ground_truth
                .sections()
                .zip(predicted.sections())
                .map(|((section, gt), (_, pred))| (section.key(), gt, pred)),
        )
    }

    /// Raw judge score before batch clamping.
    pub fn similarity_raw(&self, predicted: &str, gold: &str) -> Result<f64, MetricsError> {
        let call = self
            .client
            .call(PromptId::QaSim, &vars([("predicted", predicted), ("gold", gold)]))?;
        parse_similarity(call.first())
    }

    /// Scores a batch and applies the batch-level clamping rule.
    pub fn similarity_scores(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>, MetricsError> {
        let raw = pairs
            .iter()
            .map(|(p, g)| self.similarity_raw(p, g))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(clamp_similarity_batch(&raw))
    }

    pub fn similarity_score(&self, predicted: &str, gold: &str) -> Result<f64, MetricsError> {
        Ok(self.similarity_scores(&[(predicted, gold)])?[0])
    }

    /// Byte-identical answers match without a backend call.
    pub fn exact_match_judge(&self, predicted: &str, gold: &str) -> Result<ExactMatch, MetricsError> {
        if predicted == gold {
            return Ok(ExactMatch {
                matched: true,
                explanation: "identical strings".to_string(),
            });
        }
        let call = self
            .client
            .call(PromptId::QaExact, &vars([("predicted", predicted), ("gold", gold)]))?;
        parse_exact_verdict(call.first())
    }
}
