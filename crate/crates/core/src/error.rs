use thiserror::Error;

/// Errors produced by model construction, certification, solvers and experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid conditional law: {0}")]
    InvalidLaw(String),

    #[error("infeasible moment matching: {0}")]
    InfeasibleConstruction(String),

    #[error(
        "certification failed at step {step}: {inequality} ({lhs:.6e} > {rhs:.6e}) for law {law}"
    )]
    CertificationFailed {
        step: usize,
        law: String,
        inequality: String,
        lhs: f64,
        rhs: f64,
    },

    #[error("no positive root: {0}")]
    NoRoot(String),

    #[error("invalid Markov chain: {0}")]
    InvalidChain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
