use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inadmissible trial potential: max |psi'| = {max_slope} exceeds the admissible bound")]
    InadmissibleTrial { max_slope: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("no escape point found up to t = {t_cap}: seed violates superquadratic growth")]
    NoEscape { t_cap: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}): {reason}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    #[error("iterate collapsed to the trivial solution (norm {norm:e})")]
    TrivialLimit { norm: f64 },

    #[error("config error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },

    #[error("config key `{key}`: {msg}")]
    ConfigRange { key: String, msg: String },

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
