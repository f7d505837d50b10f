use thiserror::Error;

/// Errors produced by the pure (non-network) parts of the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("response table must have exactly 256 entries, got {0}")]
    TableSize(usize),
    #[error("response table entry {0} is empty")]
    EmptyTableEntry(usize),
    #[error("a chain needs at least 2 questions, got {0}")]
    TooFewQuestions(usize),
    #[error("question {0} is empty")]
    EmptyQuestion(usize),
    #[error("duplicate question at positions {first} and {second}: {question:?}")]
    DuplicateQuestion {
        question: String,
        first: usize,
        second: usize,
    },
    #[error("cannot split {questions} questions into {chains} chains of at least 2")]
    TooManyChains { questions: usize, chains: usize },
    #[error("collusion bound {bound} must be positive and smaller than the {instances} instances")]
    CollusionBound { bound: usize, instances: usize },
    #[error("question pool too small: need {required} questions, have {available}")]
    PoolTooSmall { required: usize, available: usize },
    #[error("vocabulary is invalid: {0}")]
    Vocabulary(String),
    #[error("could not generate {wanted} distinct questions: {reason}")]
    Generation { wanted: usize, reason: String },
    #[error("near-miss generation failed: {0}")]
    NearMiss(String),
    #[error("invalid prompt format {id:?}: {reason}")]
    PromptFormat { id: String, reason: String },
    #[error("invalid padding config: {0}")]
    Padding(String),
    #[error("invalid dataset request: {0}")]
    Dataset(String),
    #[error("probability {value} at position {index} is outside [0, 1]")]
    Probability { index: usize, value: f64 },
    #[error("benchmark {0:?} has no baseline score")]
    MissingBaseline(String),
    #[error("chain file integrity check failed: {0}")]
    Integrity(String),
    #[error("malformed chain file: {0}")]
    ChainFile(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
