use thiserror::Error;

/// Errors raised anywhere in the forward/inverse pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("fractional order {0} outside (0, 1]")]
    InvalidOrder(f64),

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("argument {0} outside the supported domain z <= 0")]
    OutOfDomain(f64),

    #[error("invalid mesh parameters: {0}")]
    InvalidMesh(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    PointOutsideMesh { x: f64, y: f64 },

    #[error("point ({x}, {y}) lies on the boundary; sources must be strictly interior")]
    PointOnBoundary { x: f64, y: f64 },

    #[error("coefficient {name} violates its bound at ({x}, {y}): value {value}")]
    Coefficient {
        name: &'static str,
        x: f64,
        y: f64,
        value: f64,
    },

    #[error("subdomain mask is empty: {0}")]
    EmptyMask(String),

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is singular: pivot {pivot} = {value:e}")]
    Singular { pivot: usize, value: f64 },

    #[error(
        "iterative solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite state at time step {0}")]
    NonFinite(usize),

    #[error("invalid source set: {0}")]
    InvalidSources(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("time grids are not nested: {0}")]
    NonNestedGrids(String),

    #[error("location {index} = ({x}, {y}) leaves the admissible region")]
    GuardViolation { index: usize, x: f64, y: f64 },

    #[error("singular normal equations (regularization too weak?): {0}")]
    SingularNormalEquations(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
