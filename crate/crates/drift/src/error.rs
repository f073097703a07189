use std::path::PathBuf;

/// Errors produced by any layer of the simulator.
#[derive(Debug, thiserror::Error)]
pub enum DriftError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// A block with no positives or no negatives has no defined loss.
    #[error("block loss undefined: {0}")]
    UndefinedBlock(&'static str),

    #[error("item {0} is not covered by any partition")]
    Coverage(u32),

    #[error("no route for item {0}")]
    Routing(u32),

    /// AEAD tag verification failed: wrong key or tampered message.
    #[error("authentication failure")]
    AuthFailure,

    #[error("nonce counter exhausted for data owner {0}")]
    NonceExhausted(u32),

    #[error("entropy source failure: {0}")]
    Entropy(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("malformed message: {0}")]
    Codec(String),

    #[error("non-finite value introduced at {0}")]
    NonFinite(String),

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("no evaluable users in the test stream")]
    EmptyReport,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DriftError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DriftError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = DriftError> = std::result::Result<T, E>;
