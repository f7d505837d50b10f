//! Hash-chained fingerprints for language-model ownership verification.
//!
//! - [`chain`]: target selection by hashing each question with its whole
//!   chain, the response table and an optional owner key.
//! - [`questions`]: random-token and natural-language question sources,
//!   near-miss variants.
//! - [`dataset`]: fine-tuning records with meta prompts, prompt formats,
//!   random padding, anchors and negatives.
//! - [`metrics`]: success probabilities and required-trial computations.

pub mod chain;
pub mod dataset;
pub mod error;
pub mod format;
pub mod metrics;
pub mod questions;
pub mod rng;

pub use chain::{
    assign_collusion_resistant_chains, canonical_bytes, create_chain, partition_into_chains,
    ChainFile, ChainPlan, CollusionPlan, QuestionSet, ResponseTable, SecretKey, TargetAssignment,
    VerifiedChain,
};
pub use error::{Error, Result};
pub use format::PromptFormat;
