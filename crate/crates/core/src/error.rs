use thiserror::Error;

/// Errors raised by network handling, relaxation building and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("pruning removed every neuron of hidden layer {layer}")]
    EmptyLayer { layer: usize },

    #[error("row {row} of layer {layer} has zero extended norm")]
    ZeroRow { layer: usize, row: usize },

    #[error("radius must be positive, got {0}")]
    Radius(f64),

    #[error("target label {0} equals the predicted label")]
    TargetIsPrediction(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-positive scale entry {value} at index {index}")]
    Scale { index: usize, value: f64 },

    #[error("constraint {0} is an inequality; convert to standard form first")]
    NotStandardForm(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("{count} hidden neurons exceed the enumeration cap of {cap}")]
    PatternCap { count: usize, cap: usize },

    #[error("no activation pattern yielded a solvable subproblem")]
    NoFeasiblePattern,

    #[error("missing report for target {0}")]
    MissingTarget(usize),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
