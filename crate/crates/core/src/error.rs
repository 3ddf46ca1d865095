use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The alternative hypothesis adds no energy over the null (`omega1 <= omega0`).
    #[error("degenerate hypothesis pair: omega0 = {omega0}, omega1 = {omega1}")]
    DegenerateHypothesis { omega0: f64, omega1: f64 },

    #[error("absorptive set is empty")]
    EmptyAbsorptiveSet,

    #[error("no signal energy reaches location {0}")]
    NoSignalEnergy(usize),

    #[error("degenerate expansion point: {0}")]
    DegenerateExpansion(String),

    #[error("solver returned {status:?} for problem '{label}'")]
    Solver { status: SolveStatus, label: String },

    #[error("scenario infeasible: {0}")]
    Infeasible(String),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
