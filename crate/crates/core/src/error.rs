use thiserror::Error;

use crate::conic::ConicError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("segment {segment} is degenerate (duration {duration} s)")]
    DegenerateSegment { segment: usize, duration: f64 },

    #[error("UAV position coincides with the sensor; the rate is unbounded")]
    InfiniteRate,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "long-segment {segment} has length {length:.6} m, exceeding J * delta_max = {cap:.6} m"
    )]
    DiscretizationAccuracy {
        segment: usize,
        length: f64,
        cap: f64,
    },

    #[error("{kind} basis with L = {l} is singular or ill-conditioned (condition number {cond:e})")]
    Decomposition { kind: String, l: usize, cond: f64 },

    #[error("compression failed: {0}")]
    Compression(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("duration lower bounds sum to {total:.9} s, exceeding the period {period} s")]
    InfeasibleDurations { total: f64, period: f64 },

    #[error(transparent)]
    Conic(#[from] ConicError),
}
