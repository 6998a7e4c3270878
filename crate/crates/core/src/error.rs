use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("alphabet mismatch: {left} vs {right}")]
    AlphabetMismatch { left: usize, right: usize },

    /// A model put zero mass on a symbol that was observed.
    #[error("infinite divergence: zero model probability for symbol {symbol}")]
    InfiniteDivergence { symbol: u32 },

    #[error("context {0} has no training occurrences")]
    UnseenContext(u32),

    #[error("no embedding for token {0:?}")]
    MissingEmbedding(String),

    #[error("embedding table is empty")]
    EmptyTable,

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("interpolation weights sum to {0}, expected 1")]
    WeightSumViolation(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical rank {needed} exceeds requested embedding dimension {requested}")]
    RankOverflow { needed: usize, requested: usize },

    #[error("tau {tau} exceeds the admissible maximum {max}")]
    TauTooLarge { tau: f64, max: f64 },

    #[error("vectors differ in {0} coordinates, expected exactly 1")]
    HammingViolation(usize),

    #[error("empty test sequence")]
    EmptySequence,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
