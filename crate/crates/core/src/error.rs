use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read model {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("negative entry {value} at atom {atom}, matrix {matrix}, position ({row}, {col})")]
    NegativeEntry {
        atom: usize,
        matrix: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("non-finite entry at atom {atom}, matrix {matrix}")]
    NonFinite { atom: usize, matrix: usize },
    #[error("probabilities sum to {sum}, off by more than 1e-9 from 1")]
    ProbabilitySum { sum: f64 },
    #[error("invalid probability {0}: must lie in (0, 1]")]
    Probability(f64),
    #[error("matrix is not primitive")]
    NotPrimitive,
    #[error("mean matrix is zero")]
    ZeroMatrix,
    #[error(
        "power iteration did not converge within {iterations} iterations (last change {change:e})"
    )]
    NoConvergence { iterations: usize, change: f64 },
    #[error("zero entry raised to non-positive power t = {t} at ({row}, {col})")]
    ZeroPower { t: f64, row: usize, col: usize },
    #[error("operation requires a finite-atom model")]
    SamplerUnsupported,
    #[error("operation requires a {expected}-mode model")]
    WrongField { expected: &'static str },
    #[error("intensity support would reach {projected} matrices, above the cap {cap}; use a smaller depth")]
    SupportCap { projected: f64, cap: usize },
    #[error("population cap {cap} exceeded at depth {depth}")]
    PopulationCap { cap: usize, depth: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("{0}")]
    Estimate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
