use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {file}: {message}")]
    Parse { file: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("negative sampling failed: every entity forms a true triplet with head {head} under relation {relation}")]
    DegenerateRelation { head: usize, relation: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("loss closure is not deterministic: baseline evaluations {first} and {second} differ")]
    NonDeterministic { first: f64, second: f64 },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data or configuration rather than
    /// numeric failures during a run.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Checkpoint(_)
        )
    }
}
