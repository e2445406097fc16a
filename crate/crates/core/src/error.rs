use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("entry index {index} out of range for arity {arity}")]
    IndexOutOfRange { index: usize, arity: usize },
    #[error("arity mismatch: expected {expected}, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("{0} is not supported for this function/scheme pairing")]
    Unsupported(String),
    #[error("anchor value {m} exceeds the lower bound {bound} at {rho}")]
    AnchorOutOfRange { rho: f64, m: f64, bound: f64 },
    #[error("f is not estimable on this vector: lower bound limit {limit} < f(v) = {value}")]
    NotEstimable { limit: f64, value: f64 },
    #[error("horvitz-thompson is not applicable: zero reveal probability for f(v) = {value}")]
    ZeroRevealProbability { value: f64 },
    #[error("upper end of the optimal range is unbounded at rho = {rho}")]
    UnboundedRange { rho: f64 },
    #[error("U* grid solver did not converge (last change {change:e} at {points} points)")]
    NoConvergence { change: f64, points: usize },
    #[error("order is not total on outcome {0}")]
    OrderNotTotal(String),
    #[error("estimator table construction infeasible: {0}")]
    Infeasible(String),
    #[error("unknown outcome: {0}")]
    UnknownOutcome(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
