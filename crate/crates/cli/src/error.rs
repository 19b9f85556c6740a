use std::fmt;
use std::path::PathBuf;

/// Where a bad setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Flag,
    Defaults,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Flag => f.write_str("command line"),
            Location::Defaults => f.write_str("defaults"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{location}: {key}: {message}")]
    Config {
        location: Location,
        key: String,
        message: String,
    },
    #[error("invalid distances: {0}")]
    Distances(String),
    #[error(transparent)]
    Model(#[from] midlink::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
