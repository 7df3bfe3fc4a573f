//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform to an operation's rule.
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A NaN or infinity showed up where only finite values are allowed.
    #[error("non-finite value in {0}")]
    Numeric(String),

    /// API misuse, e.g. running a second backward pass on a consumed tape.
    #[error("{0}")]
    Usage(String),

    /// Invalid or unsatisfiable configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Phone index outside the vocabulary.
    #[error("phone index {index} out of range for vocabulary of size {vocab_size}")]
    Vocab { index: usize, vocab_size: usize },

    /// Intent label outside the configured class count.
    #[error("label {label} out of range for {num_intents} intents")]
    Label { label: usize, num_intents: usize },

    /// Malformed corpus or matrix file. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Phone-mode data where feature-mode was required, or vice versa.
    #[error("mode mismatch: {0}")]
    Mode(String),

    #[error("duplicate utterance id {0:?}")]
    Duplicate(String),

    /// Train/validation/test speaker sets overlap or are empty.
    #[error("split violation: {0}")]
    SplitViolation(String),

    #[error("unknown speaker {0:?}")]
    UnknownSpeaker(String),

    #[error("unknown intent {0:?}")]
    UnknownIntent(String),

    /// A selected speaker cannot supply k utterances for an intent.
    #[error(
        "speaker {speaker:?} has only {available} utterances for intent {intent:?}, need {needed}"
    )]
    InsufficientData {
        speaker: String,
        intent: String,
        available: usize,
        needed: usize,
    },

    /// A grid cell failed; carries the (S, k) coordinates.
    #[error("grid cell (S={s}, k={k}): {source}")]
    GridCell {
        s: usize,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
