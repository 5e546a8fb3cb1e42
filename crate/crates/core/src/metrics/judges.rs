use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactMatch {
    pub matched: bool,
    pub explanation: String,
}

/// Reads the first token of a similarity reply as a number.
pub fn parse_similarity(reply: &str) -> Result<f64, MetricsError> {
    let token = reply
        .split_whitespace()
        .next()
        .map(|t| t.trim_end_matches(['.', ',', ';']))
        .unwrap_or("");
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(MetricsError::SimilarityParseError(reply.trim().to_string())),
    }
}

/// Scores outside [0, 1] become 0, unless every score in the batch is 100,
/// in which case they all become 1.
pub fn clamp_similarity_batch(raw: &[f64]) -> Vec<f64> {
    if !raw.is_empty() && raw.iter().all(|v| *v == 100.0) {
        return vec![1.0; raw.len()];
    }
    raw.iter()
        .map(|v| if (0.0..=1.0).contains(v) { *v } else { 0.0 })
        .collect()
}

/// Leading `Yes`/`No` (case-insensitive, optionally bolded), then the
/// explanation with separating punctuation removed.
pub fn parse_exact_verdict(reply: &str) -> Result<ExactMatch, MetricsError> {
    let body = reply.trim().trim_start_matches(['*', '"', ' ']);
    let lower = body.to_ascii_lowercase();
    let (matched, rest) = if lower.starts_with("yes") {
        (true, &body[3..])
    } else if lower.starts_with("no") {
        (false, &body[2..])
    } else {
        return Err(MetricsError::JudgeParseError(reply.trim().to_string()));
    };
    if rest.chars().next().is_some_and(char::is_alphanumeric) {
        return Err(MetricsError::JudgeParseError(reply.trim().to_string()));
    }
    let explanation = rest
        .trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '"' | '.' | ',' | ':' | ';' | '-' | '—' | '–'))
        .trim()
        .to_string();
    Ok(ExactMatch { matched, explanation })
}
