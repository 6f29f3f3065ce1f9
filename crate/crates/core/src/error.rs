use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("row {row} has no finite entry (query with an empty attention set)")]
    DegenerateRow { row: usize },

    #[error("{op} received the -inf mask sentinel; only softmax may consume it")]
    MaskSentinel { op: &'static str },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("inconsistent segmentation: {0}")]
    Segmentation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at byte offset {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dims(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension { op, left, right }
    }

    /// Seeds are echoed into TOML, whose integers are signed 64-bit.
    pub(crate) fn check_seed(seed: u64) -> Result<()> {
        if seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {seed} exceeds {}", i64::MAX)));
        }
        Ok(())
    }
}
