//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by geometric primitives, fitting and map evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimensions: ambient {ambient}, intrinsic {intrinsic}")]
    UnsupportedDimension { ambient: usize, intrinsic: usize },

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("frame is not orthonormal (residual {residual:e})")]
    NonOrthonormalFrame { residual: f64 },

    #[error("direction vectors are linearly dependent")]
    RankDeficientFrame,

    #[error("plane misses the ball B(x, {radius}) (distance {distance})")]
    DisjointBall { radius: f64, distance: f64 },

    #[error("no samples in ball of radius {radius}")]
    EmptyBall { radius: f64 },

    #[error("sample set in ball of radius {radius} is rank deficient ({samples} samples)")]
    RankDeficientSamples { radius: f64, samples: usize },

    #[error("degenerate fitting ball at level {level}, center {index}: {samples} samples")]
    DegenerateBall { level: usize, index: usize, samples: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("weights are required for this statistic")]
    MissingWeights,

    #[error("normals are required for this statistic")]
    MissingNormals,

    #[error("matrix outside the projection domain: |SSᵀ - I| = {deviation}")]
    ProjectionDomain { deviation: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient sample density: {0}")]
    InsufficientSamples(String),

    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
