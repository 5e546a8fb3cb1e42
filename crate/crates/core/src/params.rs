use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling parameters bound to a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub num_completions: u32,
    /// Dialog length limit for prompts that drive a conversation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_budget: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("temperature must be finite and >= 0, got {0}")]
    Temperature(f64),
    #[error("max_tokens must be positive")]
    MaxTokens,
    #[error("top_p must lie in (0, 1], got {0}")]
    TopP(f64),
    #[error("frequency_penalty must be finite, got {0}")]
    FrequencyPenalty(f64),
    #[error("num_completions must be positive")]
    NumCompletions,
    #[error("turn_budget must be positive when set")]
    TurnBudget,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ParamsError::Temperature(self.temperature));
        }
        if self.max_tokens == 0 {
            return Err(ParamsError::MaxTokens);
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ParamsError::TopP(self.top_p));
        }
        if !self.frequency_penalty.is_finite() {
            return Err(ParamsError::FrequencyPenalty(self.frequency_penalty));
        }
        if self.num_completions == 0 {
            return Err(ParamsError::NumCompletions);
        }
        if self.turn_budget == Some(0) {
            return Err(ParamsError::TurnBudget);
        }
        Ok(())
    }

    /// Applies the set fields of `delta` on top of `self`.
    pub fn with_overrides(mut self, delta: &ParamsOverride) -> Self {
        if let Some(t) = delta.temperature {
            self.temperature = t;
        }
        if let Some(m) = delta.max_tokens {
            self.max_tokens = m;
        }
        if let Some(p) = delta.top_p {
            self.top_p = p;
        }
        if let Some(f) = delta.frequency_penalty {
            self.frequency_penalty = f;
        }
        if let Some(n) = delta.num_completions {
            self.num_completions = n;
        }
        if let Some(b) = delta.turn_budget {
            self.turn_budget = Some(b);
        }
        self
    }
}

/// Partial parameter set used for experiment-level overrides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsOverride {
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub top_p: Option<f64>,
    pub frequency_penalty: Option<f64>,
    pub num_completions: Option<u32>,
    pub turn_budget: Option<u32>,
}

impl ParamsOverride {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// How hard the corruption prompt is pushed: 3, 5 or 7 out of 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionLevel {
    Low,
    Medium,
    High,
}

impl CorruptionLevel {
    pub const ALL: [CorruptionLevel; 3] = [CorruptionLevel::Low, CorruptionLevel::Medium, CorruptionLevel::High];

    pub fn magnitude(self) -> u32 {
        match self {
            CorruptionLevel::Low => 3,
            CorruptionLevel::Medium => 5,
            CorruptionLevel::High => 7,
        }
    }

    pub fn fraction(self) -> f64 {
        f64::from(self.magnitude()) / 10.0
    }

    pub fn label(self) -> &'static str {
        match self {
            CorruptionLevel::Low => "low",
            CorruptionLevel::Medium => "medium",
            CorruptionLevel::High => "high",
        }
    }
}

impl fmt::Display for CorruptionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown corruption level `{0}` (expected low, medium or high)")]
pub struct UnknownLevel(pub String);

impl FromStr for CorruptionLevel {
    type Err = UnknownLevel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" | "3" => Ok(CorruptionLevel::Low),
            "medium" | "5" => Ok(CorruptionLevel::Medium),
            "high" | "7" => Ok(CorruptionLevel::High),
            _ => Err(UnknownLevel(s.to_string())),
        }
    }
}
