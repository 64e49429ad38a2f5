use thiserror::Error;

/// Errors produced by the library. The CLI maps each variant onto an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("step {h} does not divide the {axis} horizon {horizon}")]
    NonDivisibleStep {
        axis: &'static str,
        horizon: f64,
        h: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} is not aligned with the lattice (step {h})")]
    Misaligned { what: String, h: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("field contains a non-finite value at ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("coefficient check failed: {0}")]
    Coefficients(String),

    /// The operator does not admit a function-valued solution: a + b is not identically zero.
    #[error(
        "existence criterion a(t,x) = -b(t,x) violated: max |a+b| = {deviation:e} at (t={t}, x={x})"
    )]
    ExistenceViolated { deviation: f64, t: f64, x: f64 },

    #[error("b is not identically zero (max |b| = {deviation:e} at (t={t}, x={x})); use the existence check on a + b instead")]
    NonZeroDrift { deviation: f64, t: f64, x: f64 },

    #[error("initial curve is defined on [0, {defined}] but [0, {needed}] is required")]
    CurveDomain { defined: f64, needed: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
