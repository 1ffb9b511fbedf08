use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A problem in a data file, located by file line and column name.
    #[error("{source_name}, line {line}{}: {message}", column.as_ref().map(|c| format!(", column {c:?}")).unwrap_or_default())]
    Data { source_name: String, line: u64, column: Option<String>, message: String },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    /// A library error, tagged with the module and the config block that
    /// led to it.
    #[error("{module} (config {path}): {source}")]
    Method { module: &'static str, path: String, source: genorisk_core::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io { path: path.into(), source }
    }
}

/// Attach module and config-path context to library errors.
pub(crate) trait Context<T> {
    fn within(self, module: &'static str, path: &str) -> Result<T>;
}

impl<T> Context<T> for genorisk_core::Result<T> {
    fn within(self, module: &'static str, path: &str) -> Result<T> {
        self.map_err(|source| Error::Method { module, path: path.to_string(), source })
    }
}
