use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid is not commensurate: {what} = {ratio} is not an integer")]
    NonCommensurateGrid { what: &'static str, ratio: f64 },

    #[error("time step h = {h} exceeds maturity step delta = {delta}")]
    StepOrderViolation { h: f64, delta: f64 },

    #[error("time {t} outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stencil needs maturity node {needed} but the grid ends at {available}")]
    StencilOutOfRange { needed: usize, available: usize },

    #[error("interpolation node {node} was frozen before step {step}")]
    MissingFictitiousNode { node: usize, step: usize },

    #[error("Monte Carlo estimate needs at least 2 paths, got {0}")]
    InsufficientPaths(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
