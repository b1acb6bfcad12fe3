use crate::solver::SolverError;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}, column {column}: {msg}")]
    Load {
        path: PathBuf,
        row: usize,
        column: usize,
        msg: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("unknown attribute {attr} in {context}")]
    UnknownAttribute { attr: String, context: String },
    #[error("query error: {0}")]
    Query(String),
    #[error("AVG over an empty selection")]
    EmptyAverage,
    #[error("queries are not comparable: no attribute matches")]
    Incomparable,
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}
