//! Desk-scale pipeline for synthetic MDD-diagnosis research runs.
//!
//! The crate covers the full loop: synthetic cohort generation calibrated to
//! published baseline statistics, clinical narrative serialization, reasoning
//! corpus construction against chat-completion oracles, supervised and
//! reinforcement training of a small autoregressive token policy, and a
//! statistics suite (ROC/AUC, DeLong, text overlap) for reporting.
//!
//! Everything is seeded and deterministic so that whole-pipeline runs can be
//! compared hash-for-hash.

pub mod cohort;
pub mod error;
pub mod features;
pub mod grpo;
pub mod metrics;
pub mod narrative;
pub mod oracle;
pub mod policy;
pub mod reasoner;
pub mod report;
pub mod seed;
pub mod stats;
pub mod tokenizer;
pub mod toytask;

pub use cohort::{CohortSummary, ParticipantRecord, Value};
pub use error::Error;
pub use features::{registry, FeatureKind, FeatureSpec, Label};
pub use grpo::{GrpoConfig, RewardBreakdown, RolloutGroup, UpdateStats};
pub use narrative::{NarrativeDoc, PromptTemplate, QaPair, Tier};
pub use oracle::{ChatExchange, ChatMessage, ChatRequest, ExtractedAnswer, Oracle, OracleVerdict};
pub use policy::{LossReport, PolicyParams, TokenSeq};
pub use reasoner::{PipelineConfig, ReasoningSample, SampleStatus, SynthesisReport};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
