use thiserror::Error;

/// Errors raised while building a basis or its operator cache.
#[derive(Debug, Error)]
pub enum BasisError {
    #[error("axis `{0}` has no values")]
    EmptyAxis(&'static str),
    #[error("axis `{axis}` must be strictly increasing and nonnegative (offending value {value})")]
    BadAxis { axis: &'static str, value: f64 },
    #[error("shape constant must be positive, got {0}")]
    NonPositiveShape(f64),
    #[error("basis function {index} has nonpositive shape ({sx}, {sy})")]
    BadShape { index: usize, sx: f64, sy: f64 },
    #[error("basis center {index} at ({x}, {y}) is negative")]
    NegativeCenter { index: usize, x: f64, y: f64 },
    #[error("duplicate basis center at ({x}, {y})")]
    DuplicateCenter { x: f64, y: f64 },
    #[error("centers and shapes differ in length ({centers} vs {shapes})")]
    LengthMismatch { centers: usize, shapes: usize },
    #[error("interpolation matrix is numerically singular (reciprocal condition {rcond:e})")]
    SingularInterpolation { rcond: f64 },
    #[error("coefficient vector has length {got}, basis has {expected} functions")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Errors raised by the kinetics assembly and time integration.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("invalid kinetic parameters: {0}")]
    InvalidParams(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("basis has no center at the monomer position ({x}, {y})")]
    NoMonomerCenter { x: f64, y: f64 },
    #[error("Newton iteration did not converge in {iterations} iterations (last correction {last_correction:e})")]
    NonConvergence { iterations: usize, last_correction: f64 },
    #[error("Newton matrix is singular")]
    SingularNewtonMatrix,
    #[error("implicit update for the cyclized population is singular")]
    SingularCycleUpdate,
    #[error("time step {tau:e} underflowed at t = {t:e}")]
    Stall { tau: f64, t: f64 },
}

/// Errors raised by the post-processing layer.
#[derive(Debug, Error)]
pub enum PostError {
    #[error("chain length must be at least 1, got {0}")]
    ChainLengthBelowOne(f64),
    #[error("degree of branching must lie in (0, 1], got {0}")]
    BranchingOutOfRange(f64),
    #[error("label index {i} outside 0..={x}")]
    LabelOutOfRange { i: u64, x: u64 },
    #[error("cycle geometry needs at least two terminal units, got x = {0}")]
    TooFewTerminals(f64),
    #[error("point (db = {db}, n = {n}) lies outside the image of the domain")]
    OutsideImage { db: f64, n: f64 },
    #[error("trajectory has no snapshots")]
    EmptyTrajectory,
}

/// Errors raised by the brute-force reference integrators.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("moment closure only holds without cyclization (lambda = {0})")]
    CyclizationNotSupported(f64),
    #[error("truncation {x_max} x {y_max} exceeds the desk-scale limit")]
    TruncationTooLarge { x_max: usize, y_max: usize },
    #[error("target conversion {0} outside (0, 1)")]
    BadTarget(f64),
    #[error("integrator step size underflow at t = {0:e}")]
    StepUnderflow(f64),
    #[error("invalid kinetic parameters: {0}")]
    InvalidParams(String),
}
