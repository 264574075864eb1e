use thiserror::Error;

/// Errors produced by the tensor, layer, training, and I/O paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("kernel {k}x{k} does not fit into {rows}x{cols} target")]
    KernelTooLarge { k: usize, rows: usize, cols: usize },

    #[error("batch normalization in training mode needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),

    #[error("pooling requires even spatial dims, got {rows}x{cols}")]
    OddPoolInput { rows: usize, cols: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid data format: {0}")]
    Format(String),

    #[error("unknown architecture '{0}'")]
    UnknownArch(String),

    #[error("schedule step {step} out of range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
