use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("codebook is rank deficient (sigma_min = {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },
    #[error("gradient contains NaN or infinite entries")]
    InvalidGradient,
    #[error("value {value} outside [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("field `{0}` does not fit in 32 bits")]
    Overflow(&'static str),
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
