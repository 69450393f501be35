use thiserror::Error;

use crate::milp::SolveStatus;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: {detail}")]
    Dimension { what: String, detail: String },

    #[error("invalid {what}: {detail}")]
    Invalid { what: String, detail: String },

    #[error("malformed MILP: {0}")]
    InvalidProblem(String),

    #[error("integer variable `{name}` needs finite bounds")]
    UnboundedInteger { name: String },

    #[error("solver engine `{0}` is not compiled in")]
    EngineUnavailable(&'static str),

    #[error("solver backend failure: {0}")]
    Backend(String),

    #[error("solve finished with status {0:?}, an optimal solution was required")]
    NotOptimal(SolveStatus),

    #[error("variable `{name}` = {value} is not integral within tolerance")]
    IntegralityResidual { name: String, value: f64 },

    #[error("realized reference differs from nominal at fixed index {index}")]
    ReferenceMismatch { index: usize },

    #[error("budget {gamma} is outside 0..={max}")]
    GammaOutOfRange { gamma: usize, max: usize },

    #[error("nominal reference admits no feasible recourse input")]
    NominalInfeasible,
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            what: what.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
