use thiserror::Error;

/// Errors raised across scenario construction, solving and estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input failed validation before any computation ran.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown scenario id `{0}`")]
    UnknownScenario(String),

    #[error("mean-field solver did not converge after {iterations} iterations (residual {residual:.3e}, contraction estimate {contraction:.3}, last iterate {last:?})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        contraction: f64,
        last: Vec<f64>,
    },

    #[error("{what} is singular (condition number {condition:.3e}); {advice}")]
    Singular {
        what: &'static str,
        condition: f64,
        advice: &'static str,
    },

    #[error("perturbation regression is rank deficient (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("treatment arm `{arm}` has {count} units, at least {required} required")]
    DegenerateArm {
        arm: &'static str,
        count: usize,
        required: usize,
    },

    #[error("monte carlo integration needs at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("{failed} of {total} replications failed (limit {limit}): {last}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: usize,
        last: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad user input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::UnknownScenario(_))
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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
