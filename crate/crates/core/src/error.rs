use alloc::string::String;

/// Errors raised by the core primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("non-binary response {value} at row {row} for classification")]
    NonBinaryResponse { row: usize, value: f64 },

    #[error("estimator requires a response column")]
    MissingResponse,

    #[error("invalid index subset: {0}")]
    InvalidSubset(String),

    #[error("subset size b = {b} exceeds n = {n}")]
    SubsetTooLarge { b: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample has zero total weight")]
    ZeroTotalWeight,

    #[error("Poisson resample had zero total weight twice in a row")]
    DegeneratePoisson,

    #[error("normal equations are singular (rank deficient design)")]
    Singular,

    #[error("Newton iterations did not converge after {iterations} steps (gradient max-norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("estimator produced a non-finite estimate")]
    NonFiniteEstimate,

    #[error("ensemble of {got} estimates is too small; need at least {needed}")]
    TooFewEstimates { needed: usize, got: usize },

    #[error("summary shape or kind mismatch: {0}")]
    ShapeMismatch(&'static str),

    #[error("operation requires an interval summary")]
    WrongKind,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
