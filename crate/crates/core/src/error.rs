use thiserror::Error;

/// Errors produced anywhere in the SpMM pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid LOOPS conversion: {0}")]
    Conversion(String),

    #[error("block density is undefined for a BCSR part with no tiles")]
    EmptyBcsr,

    #[error("lane mismatch: expected {expected}, got {got}")]
    LaneMismatch { expected: usize, got: usize },

    #[error("unsupported engine configuration: {0}")]
    EngineConfig(String),

    #[error("tile window out of bounds: {0}")]
    TileBounds(String),

    #[error("kernel configuration: {0}")]
    KernelConfig(String),

    #[error("schedule does not match matrix: {0}")]
    ScheduleMismatch(String),

    #[error("rank-deficient design matrix: basis column `{column}` is linearly dependent")]
    RankDeficient { column: &'static str },

    #[error("performance model fit needs at least 5 samples, got {0}")]
    TooFewSamples(usize),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("binary LOOPS dump: {0}")]
    Decode(String),

    #[error("schedule document: {0}")]
    Schedule(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
