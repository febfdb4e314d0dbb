use thiserror::Error;

use crate::hopf::HopfSolution;

/// Failure classes shared by every solver in the crate.
///
/// The variants line up with the exit codes of the command-line frontend.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "{what} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("not a regular solution: {0}")]
    Regularity(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("continuation stalled after {} accepted points: {reason}", partial.len())]
    Stalled {
        reason: String,
        partial: Vec<HopfSolution>,
    },

    #[error(transparent)]
    Parse(#[from] crate::model::expr::ParseError),

    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn regularity(msg: impl Into<String>) -> Self {
        Error::Regularity(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
