use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Core(#[from] smoothforest_core::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    /// `node` is a path such as `trees[1]/left/right`.
    #[error("node {node}: {reason}")]
    Schema { node: String, reason: String },

    /// 1-based file line and column.
    #[error("row {row}, column {column}: {reason}")]
    Csv { row: usize, column: usize, reason: String },

    #[error("csv: {0}")]
    CsvFormat(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

pub(crate) fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &std::path::Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| IoError::File { path: path.to_path_buf(), source })
}
