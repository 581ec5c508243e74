use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate external mode index {0}")]
    DuplicateMode(usize),
    #[error("external mode index {mode} out of range for d_ext = {d_ext}")]
    ModeOutOfRange { mode: usize, d_ext: usize },
    #[error("internal label {label} out of range for d_int = {d_int}")]
    LabelOutOfRange { label: usize, d_int: usize },
    #[error("internal vector {0} has zero norm")]
    ZeroVector(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient dimensions: {0}")]
    InsufficientDimensions(String),
    #[error("state is not normalizable (norm {0})")]
    ZeroNorm(f64),
    #[error("order k = {k} out of range 1..={max}")]
    OrderOutOfRange { k: usize, max: usize },
    #[error("weingarten system is singular for d = {d} < k = {k}")]
    SingularWeingarten { k: usize, d: usize },
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("operation requires a separable state")]
    NotSeparable,
    #[error("matrix is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("numerical invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
