use thiserror::Error;

use crate::cftp::RunStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),

    #[error("no disjoint covering with eps = {eps}: centers {left} and {right} are closer than 2*eps")]
    CoveringInfeasible { eps: f64, left: f64, right: f64 },

    #[error("chain is not lumpable: classes ({from}, {to}) disagree by {spread:.3e}")]
    NotLumpable { from: usize, to: usize, spread: f64 },

    #[error("chain is not primitive")]
    NotPrimitive,

    #[error("label {0} is never assigned by the phase-estimation model")]
    DeadLabel(usize),

    #[error("{what} requires at most {max} classes, got {got}; use the harmonic bound instead")]
    TooManyClasses { what: &'static str, max: usize, got: usize },

    #[error("run aborted: {reason}")]
    Aborted { reason: String, stats: Box<RunStats>, samples: Vec<usize> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
