//! Self-consistency voting over sampled answers.
//!
//! Every distinct trimmed string is its own ballot option; no case folding
//! or fuzzy merging happens here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot vote over an empty ballot")]
pub struct EmptyBallot;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCount {
    pub answer: String,
    pub count: u32,
}

/// Exact-string tally in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VoteTally {
    entries: Vec<VoteCount>,
}

impl VoteTally {
    pub fn from_completions<S: AsRef<str>>(completions: &[S]) -> Result<Self, EmptyBallot> {
        if completions.is_empty() {
            return Err(EmptyBallot);
        }
        let mut entries: Vec<VoteCount> = Vec::new();
        for c in completions {
            let form = c.as_ref().trim();
            match entries.iter_mut().find(|e| e.answer == form) {
                Some(e) => e.count += 1,
                None => entries.push(VoteCount {
                    answer: form.to_string(),
                    count: 1,
                }),
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[VoteCount] {
        &self.entries
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn count_of(&self, answer: &str) -> u32 {
        self.entries.iter().find(|e| e.answer == answer).map_or(0, |e| e.count)
    }

    /// `(answer, count / total)` in first-occurrence order.
    pub fn fractions(&self) -> Vec<(&str, f64)> {
        let total = f64::from(self.total());
        self.entries
            .iter()
            .map(|e| (e.answer.as_str(), f64::from(e.count) / total))
            .collect()
    }

    /// Highest count wins; among tied forms the one seen first wins.
    pub fn winner(&self) -> &str {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if e.count > best.count {
                best = e;
            }
        }
        &best.answer
    }

    /// One `- answer (NN%)` line per form.
    pub fn render_percentages(&self) -> String {
        self.fractions()
            .into_iter()
            .map(|(answer, frac)| format!("- {} ({}%)", answer, format_percent(frac)))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Whole percentages print without decimals, anything else with one.
pub fn format_percent(fraction: f64) -> String {
    let pct = fraction * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}", pct.round() as i64)
    } else {
        format!("{pct:.1}")
    }
}

pub fn vote_distribution<S: AsRef<str>>(completions: &[S]) -> Result<VoteTally, EmptyBallot> {
    VoteTally::from_completions(completions)
}

/// Most frequent trimmed answer; ties go to the earliest first occurrence.
pub fn majority_vote<S: AsRef<str>>(completions: &[S]) -> Result<String, EmptyBallot> {
    Ok(VoteTally::from_completions(completions)?.winner().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_majority() {
        let ballot = ["Meta-analysis", "Meta-analysis", "Meta-analysis", "Systematic review", "Meta-analysis"];
        assert_eq!(majority_vote(&ballot).unwrap(), "Meta-analysis");
    }

    #[test]
    fn tie_goes_to_first_seen() {
        assert_eq!(majority_vote(&["A", "B", "A", "B", "C"]).unwrap(), "A");
        assert_eq!(majority_vote(&["B", "A", "A", "B"]).unwrap(), "B");
    }

    #[test]
    fn singleton_and_empty() {
        assert_eq!(majority_vote(&["x"]).unwrap(), "x");
        assert_eq!(majority_vote::<&str>(&[]), Err(EmptyBallot));
        assert_eq!(vote_distribution::<&str>(&[]), Err(EmptyBallot));
    }

    #[test]
    fn distribution_four_to_one() {
        let mut ballot = vec!["Meta-analysis"; 4];
        ballot.push("Systematic review and meta-analysis");
        let tally = vote_distribution(&ballot).unwrap();
        let fr = tally.fractions();
        assert_eq!(fr, vec![("Meta-analysis", 0.8), ("Systematic review and meta-analysis", 0.2)]);
        assert_eq!(
            tally.render_percentages(),
            "- Meta-analysis (80%)\n- Systematic review and meta-analysis (20%)"
        );
    }

    #[test]
    fn unanimous_distribution() {
        let tally = vote_distribution(&["UTI"; 5]).unwrap();
        assert_eq!(tally.entries(), [VoteCount { answer: "UTI".into(), count: 5 }]);
        assert_eq!(tally.fractions(), vec![("UTI", 1.0)]);
    }

    #[test]
    fn case_variants_stay_separate() {
        let tally = vote_distribution(&["UTI", "uti"]).unwrap();
        assert_eq!(tally.fractions(), vec![("UTI", 0.5), ("uti", 0.5)]);
    }

    #[test]
    fn surrounding_whitespace_is_trimmed() {
        let tally = vote_distribution(&["  UTI\n", "UTI"]).unwrap();
        assert_eq!(tally.count_of("UTI"), 2);
    }

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(1.0), "100");
        assert_eq!(format_percent(1.0 / 3.0), "33.3");
    }
}
