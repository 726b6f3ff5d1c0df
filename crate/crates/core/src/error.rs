use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("negative weight at index {idx}: {value}")]
    NegativeWeight { idx: usize, value: f64 },

    #[error("weights not normalized (expected sum 1 within 1e-9): sum={sum}")]
    NotNormalized { sum: f64 },

    #[error("sample count must be positive")]
    EmptySample,

    #[error("target has singular mass {0} on the base-null set; no finite truncation level exists")]
    SingularTarget(f64),

    #[error("infeasible plan: {0}")]
    Infeasible(String),

    #[error("need at least {needed} samples for {groups} groups, got {got}")]
    TooFewSamples { needed: usize, got: usize, groups: usize },

    #[error("self-normalized estimate undefined: all weights are zero")]
    ZeroWeights,

    #[error("every race score is infinite (all drawn atoms have zero ratio)")]
    AllNullDraws,

    #[error("regime classification failed: {0}")]
    ClassificationFailed(String),

    #[error("unknown divergence spec: {0}")]
    UnknownDivergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for the errors that mean "no finite plan exists" rather than bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_) | Error::SingularTarget(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
