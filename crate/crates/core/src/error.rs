use thiserror::Error;

/// Which geometric invariant of the leverage map failed to hold.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("derivative has no + to - sign change on [0, 1): no interior maximum")]
    NoCriticalPoint,
    #[error("map is not unimodal on [0, 1): {0} derivative sign changes")]
    NotUnimodal(usize),
    #[error("map has no zero crossing right of the critical point below 1")]
    NoZeroCrossing,
    #[error("peak value {delta} is not below the zero crossing {b}")]
    DeltaNotBelowB { delta: f64, b: f64 },
    #[error("zero crossing {b} is not below 1")]
    BNotBelowOne { b: f64 },
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("noise amplitude a = {a} exceeds the admissible bound {bound}")]
    InadmissibleNoise { a: f64, bound: f64 },
    #[error("state {state} at step {step} left the extended domain [{lo}, {hi}]")]
    DomainEscape { state: f64, step: usize, lo: f64, hi: f64 },
    #[error("rejection sampler stalled after {0} consecutive rejections")]
    SamplerStalled(u64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model breakdown: {0}")]
    ModelBreakdown(String),
}

pub type Result<T> = std::result::Result<T, Error>;
