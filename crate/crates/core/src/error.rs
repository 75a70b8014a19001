use thiserror::Error;

use crate::geom::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh dims must be >= 1 on every axis, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("cell size must be > 0 on every axis, got {0:?}")]
    BadCellSize([f64; 3]),
    #[error("partition grid {grid:?} does not divide mesh dims {dims:?}")]
    IndivisibleGrid { dims: [usize; 3], grid: [usize; 3] },
    #[error("no partition with id {0}")]
    UnknownPartition(usize),
    #[error("hilbert coordinates {coords:?} outside [0, 2^{order})")]
    HilbertOutOfRange { coords: Vec<u64>, order: u32 },
}

/// Violations of an operation's stated preconditions on field data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field size mismatch: {0}")]
    SizeMismatch(String),
    #[error("point {point:?} lies outside the field extent")]
    OutOfExtent { point: Vec3 },
    #[error("state slices do not tile a rectangular cell box: {0}")]
    IncompleteMosaic(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("temperature {0} K outside the saturation closure range [200, 350] K")]
    TemperatureOutOfRange(f64),
    #[error("non-finite parcel state in chunk {chunk} parcel {parcel}")]
    NonFinite { chunk: usize, parcel: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("parcel {parcel} of chunk {chunk} at {position:?} left the provided field coverage")]
    CoverageViolation {
        chunk: usize,
        parcel: usize,
        position: Vec3,
    },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("pressure solve did not converge: {iterations} iterations, relative residual {residual:e}")]
    PoissonNotConverged { iterations: usize, residual: f64 },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("no progress within the wait bound; actor states:\n{0}")]
    Deadlock(String),
    #[error("skew violation: rank {rank} at euler step {euler}, worker {worker} at lagrange step {lagrange}")]
    SkewViolation {
        rank: usize,
        worker: usize,
        euler: u64,
        lagrange: u64,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("send to unknown node {0}")]
    UnknownNode(String),
    #[error("actor panicked: {0}")]
    Panic(String),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("relative error needs a nonzero total, got {0}")]
    ZeroDenominator(f64),
    #[error("case is not a two-phase momentum case: {0}")]
    NotAnalytical(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutputError {
    #[error("cannot write {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("invalid output request: {0}")]
    Invalid(String),
}
