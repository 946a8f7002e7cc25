use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("model `{model}`: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parameter count {count} exceeds the dense Hessian guard of {limit}; use the Hessian-vector product / CG path")]
    HessianGuard { count: usize, limit: usize },

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("evidence binding error: {0}")]
    Binding(String),

    #[error("stale evidence for `{solution}`: {path} changed since it was bound")]
    StaleEvidence { solution: String, path: PathBuf },

    #[error("safety case has structural problems: {0}")]
    Structure(String),

    #[error("missing artifact {path}: run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("stale artifact {path}: recorded hash {recorded}, current hash {current}; regenerate it")]
    StaleArtifact {
        path: PathBuf,
        recorded: String,
        current: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
