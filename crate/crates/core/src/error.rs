use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("activation `{0}` has no second derivative")]
    NotSmooth(&'static str),

    #[error("gaussian moment power {0} is not supported (1..=8)")]
    UnsupportedPower(u32),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("gradient norm {0:e} is below 1e-12; perturbation undefined")]
    ZeroGradient(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("unknown bound `{0}`")]
    UnknownBound(String),

    #[error("trial count must be at least 1")]
    InvalidTrials,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
