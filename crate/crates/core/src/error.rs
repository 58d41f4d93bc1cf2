use std::path::PathBuf;

use thiserror::Error;

use crate::model_io::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid linear program: {0}")]
    InvalidProblem(String),

    #[error("simplex stalled after {iterations} iterations")]
    SolverStalled { iterations: usize },

    #[error("spectrum has no nonzero singular value")]
    DegenerateSpectrum,

    #[error("entry {index} = {value:e} is negative and cannot be a ReLU output")]
    NotAReluOutput { index: usize, value: f64 },

    #[error("output is not in the image of the layer: {0}")]
    InconsistentOutput(String),

    #[error("combinatorial search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invariance probe LP is infeasible although the anchor point is feasible")]
    ProbeInfeasible,

    #[error("row {0} is zero")]
    DegenerateRow(usize),

    #[error("index set is empty, nothing was removed")]
    NothingRemoved,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
