use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank-deficient design: numerical rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("{routine} did not converge after {iterations} iterations")]
    ConvergenceFailure {
        routine: &'static str,
        iterations: usize,
    },

    #[error("invalid rank {rank}: {reason}")]
    InvalidRank { rank: usize, reason: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("non-finite gradient in parameter {param}")]
    NonFiniteGradient { param: usize },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("CFL condition violated: factor {factor:.4} exceeds 0.9")]
    Cfl { factor: f64 },

    #[error("missing variable `{0}`")]
    MissingVariable(String),

    #[error("operation not supported for {0} propagators")]
    UnsupportedPropagator(&'static str),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("duplicate run name `{0}`")]
    DuplicateName(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
