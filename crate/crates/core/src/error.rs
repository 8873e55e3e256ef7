use std::path::PathBuf;

use thiserror::Error;

use crate::exposure::ExposureCondition;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("edge list contains no edges")]
    EmptyEdgeList,
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },
    #[error("invalid graph profile: {0}")]
    InvalidProfile(String),
    #[error("radius calibration did not reach density {target} (best {achieved}) after {iterations} iterations")]
    CalibrationFailed {
        target: f64,
        achieved: f64,
        iterations: usize,
    },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("degree tilt impossible: all nodes have the same degree")]
    TiltImpossible,
    #[error(
        "closed-form exposure probabilities need independent assignments; use Monte Carlo for {0}"
    )]
    UnsupportedDesign(&'static str),
    #[error("correlation undefined: {0} is constant")]
    UndefinedCorrelation(&'static str),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("exposed-neighbor count {m} exceeds degree {k}")]
    InvalidNeighborhood { k: usize, m: usize },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("positivity violated: node {node} observed in {condition} with zero probability")]
    Positivity {
        node: usize,
        condition: ExposureCondition,
    },
    #[error("no units in condition {0}")]
    EmptyCondition(ExposureCondition),
    #[error("degenerate variance estimate {0}")]
    DegenerateVariance(f64),
    #[error("Anderson-Darling statistic needs at least one observation in every group")]
    TooFewObservations,
    #[error("design degenerate: compared groups were empty in {failed} of {attempts} draws")]
    DegenerateDesign { failed: usize, attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
