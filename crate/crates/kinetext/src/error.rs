use std::path::PathBuf;

/// Crate-wide error type. The CLI maps variants to process exit codes, so
/// every failure must land in the variant that matches its cause, not in a
/// catch-all.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad ranges, unknown modes, unreadable config
    /// files. Exit code 1.
    #[error("config error: {0}")]
    Config(String),

    /// Missing or unusable assets: sprite directories, background clips,
    /// output paths that cannot be created. Exit code 2.
    #[error("asset error: {0}")]
    Asset(String),

    /// The generation run finished but more videos failed than the
    /// configured cap allows. The manifest and failure sidecar are still on
    /// disk. Exit code 3.
    #[error("{failed} of {total} videos failed (cap {cap})")]
    FailureRateExceeded { failed: usize, total: usize, cap: f64 },

    /// Paraphrase gateway gave up after exhausting retries.
    #[error("gateway error: {0}")]
    Gateway(String),

    /// A function was called with values that violate its preconditions
    /// (dimension mismatches, empty inputs, degenerate sizes).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Probe training aborted (non-finite loss, unusable split).
    #[error("probe error: {0}")]
    Probe(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Probe(_) => 1,
            Error::Asset(_) => 2,
            Error::FailureRateExceeded { .. } => 3,
            // Gateway and IO failures surface as asset-level problems: the
            // run could not produce its outputs.
            Error::Gateway(_) | Error::Io { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
