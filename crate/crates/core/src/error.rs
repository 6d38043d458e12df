use thiserror::Error;

/// Errors raised by the certification, simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("inconsistent scenario: graphs have {expected} and {found} nodes")]
    NodeCountMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid noise profile: {0}")]
    InvalidNoise(String),

    #[error("graph union has no edges; edge multiplicity is undefined")]
    EdgelessUnion,

    #[error("no spanning tree: stationary distribution is not unique")]
    NoSpanningTree,

    #[error("reduced Laplacian is not Hurwitz: eigenvalue {re} + {im}i")]
    NotHurwitz { re: f64, im: f64 },

    #[error("Lyapunov solve failed: {0}")]
    Lyapunov(String),

    #[error("gain inadmissible: a = {gain} must lie in (0, {bound})")]
    GainInadmissible { gain: f64, bound: f64 },

    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),

    #[error("invalid switching schedule: {0}")]
    InvalidSchedule(String),

    #[error("time {0} lies outside the schedule")]
    TimeOutOfRange(f64),

    #[error("blow-up on path {path} at t = {time}")]
    BlowUp { path: usize, time: f64 },

    #[error("curve floored: {usable} usable points in the fit window, need at least {required}")]
    CurveFloored { usable: usize, required: usize },

    #[error("check requires balanced graphs")]
    RequiresBalanced,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
