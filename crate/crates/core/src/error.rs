use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("column `{0}` named in config is absent from the input")]
    MissingColumn(String),
    #[error("column `{column}`: value `{value}` is not covered by the merge map and no default is declared")]
    Unmergeable { column: String, value: String },
    #[error("column `{column}`: value `{value}` cannot be binned (not numeric and not a bin label)")]
    Unbinnable { column: String, value: String },
    #[error("column `{column}`: unknown category `{value}`")]
    UnknownCategory { column: String, value: String },
    #[error("table is empty")]
    EmptyTable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("conditional distribution undefined: {0}")]
    UndefinedConditional(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("numeric failure: {0}")]
    NonFinite(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/validation, 2 I/O, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 2,
            Error::UndefinedConditional(_) | Error::UndefinedMetric(_) | Error::NonFinite(_) => 3,
            _ => 1,
        }
    }
}
