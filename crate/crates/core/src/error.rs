use thiserror::Error;

/// Errors produced by the planning pipeline and simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("start position {0:?} is occupied")]
    StartOccupied([f64; 3]),

    #[error("segment is infeasible: obstacle within {clearance:.3} m of the segment")]
    InfeasibleSegment { clearance: f64 },

    #[error("corridor infeasible: required slack {max_slack:.3} m")]
    CorridorInfeasible { max_slack: f64 },

    #[error("optimizer diverged after {iterations} iterations")]
    Diverged {
        iterations: usize,
        /// Last iterate whose objective was finite.
        last_finite: Vec<f64>,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Scenario(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
