//! Researcher/Decider dialog orchestration for clinical text refinement and
//! open-ended question answering, with self-consistency voting and
//! model-mediated evaluation metrics.

pub mod backend;
pub mod client;
pub mod corruption;
pub mod datasets;
pub mod dialog;
pub mod metrics;
pub mod orchestrator;
pub mod params;
pub mod prompts;
pub mod vote;

pub use dialog::{ChatMessage, DecisionKind, DeciderDecision, DialogTranscript, Role, Scratchpad, Termination};
pub use params::{CorruptionLevel, GenerationParams, ParamsOverride};
pub use vote::{majority_vote, vote_distribution, EmptyBallot, VoteTally};
