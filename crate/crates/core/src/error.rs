use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("requested dimension {requested} exceeds the configured maximum {max}")]
    DimensionOverflow { requested: usize, max: usize },

    #[error("matrix is not Hermitian (max |M - M^dag| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("vector length {0} is not a perfect square")]
    NotSquareLength(usize),

    #[error("basis is rank deficient (Gram condition number {condition:e})")]
    SingularBasis { condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("incomplete data: {0}")]
    Incomplete(String),

    #[error("insufficient history: need {needed} entries, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("finite-difference stencil point lambda = {0} is not on the grid")]
    MissingStencil(f64),

    #[error("generating function vanishes at lambda = {lambda}, t = {time}")]
    VanishingGeneratingFunction { lambda: f64, time: f64 },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("numerical contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
