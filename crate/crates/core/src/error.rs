use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid coupling: {0}")]
    InvalidCoupling(String),

    #[error("non-finite coordinate in point")]
    NonFinite,

    #[error("denominator {denominator} does not divide {target}")]
    Divisibility { denominator: u64, target: u64 },

    #[error("common denominator {lcm} exceeds bound {bound}")]
    DenominatorOverflow { lcm: u64, bound: u64 },

    #[error("problem size {size} exceeds limit {limit} for {what}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("parameter `{name}` out of range: {value} ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("step size tau = {tau} violates tau < 1/lambda+ for lambda = {lambda}")]
    StepTooLarge { tau: f64, lambda: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("geodesic bisection stalled in bracket [{lo}, {hi}]")]
    BisectionStalled { lo: f64, hi: f64 },

    #[error("no admissible perturbation found after {attempts} attempts")]
    RetryCapExhausted { attempts: usize },

    #[error("field evaluation failed: {0}")]
    Domain(String),

    #[error("solver `{0}` is not available for this operator")]
    SolverUnavailable(&'static str),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
