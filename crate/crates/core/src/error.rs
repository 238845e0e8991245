use thiserror::Error;

use crate::convex::ConvexError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("rate for {0} is zero while the matching demand is positive")]
    ZeroRate(&'static str),

    #[error("cloud path cannot meet the deadline of task {task}")]
    CloudInfeasible { task: usize },

    #[error("unsupported instance schema version {0}")]
    SchemaVersion(u32),

    #[error("enumeration needs {0} candidates, limit is 1000000")]
    TooLarge(u128),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Convex(#[from] ConvexError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
