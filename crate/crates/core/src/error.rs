use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("standard deviation must be positive, got {0}")]
    InvalidStd(f64),

    #[error("probabilities must be non-negative and sum to 1 (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("episode over: step called {calls} times with horizon {horizon}")]
    HorizonExceeded { calls: usize, horizon: usize },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("retained dimension set is empty")]
    EmptyRetained,

    #[error(
        "policy is not machine-like: state {state} on observation {observation} goes to both {first} and {second}"
    )]
    NondeterministicTransition {
        state: String,
        observation: String,
        first: String,
        second: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::ShapeMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
