use std::path::PathBuf;

use thiserror::Error;

use crate::flow::FlowState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} lies past the singular time {t_sing}")]
    OutOfWindow { t: f64, t_sing: f64 },

    #[error("time {0} is negative or not finite")]
    InvalidTime(f64),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("metric lost positivity at node {node} (h = {h:.3e}, v = {v:.3e})")]
    PositivityLoss { node: usize, h: f64, v: f64 },

    #[error("time step {dt:.3e} fell below the floor at t = {}", last.t)]
    StepFloor { dt: f64, last: Box<FlowState> },

    #[error("need at least {needed} samples in the fit window, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("base sample z = {z} is within {distance:.3e} of a zero of the section")]
    SampleAtZero { z: String, distance: f64 },

    #[error("linear map is singular (smallest eigenvalue of A*A is {0:.3e})")]
    SingularMap(f64),

    #[error("invalid projective point or tangent vector: {0}")]
    InvalidPoint(String),

    #[error("base point ({0}, {1}) is not a node of the sampled space")]
    UnknownBasePoint(usize, usize),

    #[error("need at least {needed} snapshots, got {found}")]
    InsufficientSnapshots { needed: usize, found: usize },

    #[error("sample sets do not match: {0}")]
    SampleMismatch(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
