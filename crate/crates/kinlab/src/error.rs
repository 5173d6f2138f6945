//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by grids, solvers, metrics and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("time step {dt} exceeds the {limit_name} limit {limit}")]
    Cfl { dt: f64, limit: f64, limit_name: &'static str },
    #[error("non-finite value detected at t = {time}")]
    NonFinite { time: f64 },
    #[error("density fell to {min} below the floor {floor} at t = {time}")]
    Positivity { min: f64, floor: f64, time: f64 },
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
