use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point lies behind the camera (depth {depth} < {min_depth})")]
    BehindCamera { depth: f64, min_depth: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("information matrix is rank deficient")]
    RankDeficient,

    #[error("Gauss-Newton diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("brute force search over {subsets} subsets exceeds the limit of {limit}")]
    TooLarge { subsets: u128, limit: u128 },

    #[error("degenerate scenario: only {visible} points visible")]
    Degenerate { visible: usize },

    #[error("error-ratio baseline is degenerate (denominator {0:e})")]
    DegenerateBaseline(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
