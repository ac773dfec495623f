use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {detail}")]
    Csv { path: PathBuf, detail: String },

    /// Bad cell; `row` counts data rows from 1, excluding the header.
    #[error("{path}: row {row}, column {column:?}: {detail}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        detail: String,
    },

    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{0}: no data rows")]
    EmptyDataset(PathBuf),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{0}")]
    Model(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] latrec::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}
