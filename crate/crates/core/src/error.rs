use std::path::{Path, PathBuf};

use thiserror::Error;
use varenn_lenet::LeNetError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty domain: {0}")]
    EmptyDomain(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("network error: {0}")]
    Network(#[from] LeNetError),
    #[error("experiment #{id}: {source}")]
    Experiment {
        id: u32,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Length(_) => "length",
            Error::Validation(_) => "validation",
            Error::Statistics(_) => "statistics",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::EmptyDomain(_) => "empty_domain",
            Error::Dataset(_) => "dataset",
            Error::Network(_) => "network",
            Error::Experiment { source, .. } => source.category(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "format" | "length" => 4,
            "validation" => 5,
            "dataset" | "empty_domain" => 6,
            "statistics" | "domain" => 7,
            "network" => 8,
            _ => 1,
        }
    }

    /// `{"error": category, "message": text}` on one line.
    pub fn json_line(&self) -> String {
        serde_json::json!({ "error": self.category(), "message": self.to_string() }).to_string()
    }
}
