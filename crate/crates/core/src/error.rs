use thiserror::Error;

use crate::integrator::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// The atomic sector left the disk P² + Q² ≤ 4.
    #[error("atomic constraint violated: P²+Q² = {radius_sq} > 4")]
    Domain { radius_sq: f64 },

    /// The state is within the singular band 4 − P² − Q² < ε of the north pole.
    #[error("state too close to the atomic boundary: 4-P²-Q² = {margin:e}")]
    Boundary { margin: f64 },

    #[error("trajectory reached the atomic boundary at t = {time}")]
    BoundaryReached {
        time: f64,
        partial: Box<Trajectory>,
    },

    #[error("step size control failed at t = {time} (h = {step:e})")]
    StepFailure { time: f64, step: f64 },

    #[error("state is not an equilibrium (|F| = {residual:e})")]
    NotEquilibrium { residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no nearest neighbour satisfies the temporal separation of {theiler} s")]
    NoValidNeighbor { theiler: f64 },

    #[error("variance never exceeds 10x its initial value")]
    NoGrowth,

    #[error("rejection sampling overflow: {rejected} of {drawn} draws rejected")]
    RejectionOverflow { rejected: usize, drawn: usize },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("work item {index} failed after {completed} completed items: {source}")]
    WorkItem {
        index: usize,
        completed: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Strips `Trajectory`/`WorkItem` wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Trajectory { source, .. } | Error::WorkItem { source, .. } => source.root_cause(),
            other => other,
        }
    }
}
