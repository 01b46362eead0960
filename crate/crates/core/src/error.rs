use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum CevError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("negative inner value {value:e} at state {y:e} (step condition violated or numerical pathology)")]
    NegativeInner { value: f64, y: f64 },
    #[error("coarsening factor {factor} does not divide increment count {len}")]
    NonDivisibleFactor { factor: usize, len: usize },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("step {dt:e} infeasible: {reason}")]
    Infeasible { dt: f64, reason: String },
    #[error("level 2^-{exponent} (dt = {dt:e}) infeasible: {reason}")]
    InfeasibleLevel {
        exponent: u32,
        dt: f64,
        reason: String,
    },
    #[error("invalid level spec: {0}")]
    InvalidLevelSpec(String),
    #[error("need at least 2 points to fit an order, got {0}")]
    InsufficientPoints(usize),
    #[error("non-positive value in order fit: dt = {dt:e}, rmse = {rmse:e}")]
    NonPositiveValue { dt: f64, rmse: f64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}
