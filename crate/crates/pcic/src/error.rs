//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size of an input does not satisfy an operation's contract.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An evaluator produced NaN or an infinity.
    #[error("{source_fn} returned a non-finite value at observation {row}, draw {draw}")]
    NonFinite {
        source_fn: &'static str,
        row: usize,
        draw: usize,
    },

    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Importance weights for an observation collapsed (all-zero or
    /// non-finite normalizer).
    #[error("observation {observation} has degenerate importance weights")]
    DegenerateWeights { observation: usize },

    /// A posterior sampler failed to produce draws.
    #[error("sampler failure: {0}")]
    Sampler(String),
}

pub type Result<T> = std::result::Result<T, Error>;
