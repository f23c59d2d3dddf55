use std::path::PathBuf;

use cipg_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{}: file not found", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{}: header {found:?} does not match {expected}", path.display())]
    Header {
        path: PathBuf,
        expected: String,
        found: Vec<String>,
    },
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    PartialFailure(String),
    #[error("replay mismatch: {0}")]
    Replay(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DIVERGENCE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// Stable process exit code: 1 estimator failure, 2 usage or
    /// configuration (including missing inputs), 3 I/O and data files.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::MissingFile(_) => EXIT_USAGE,
            Error::Io { .. } | Error::Parse { .. } | Error::Header { .. } | Error::Data { .. } => EXIT_IO,
            Error::PartialFailure(_) | Error::Replay(_) => EXIT_DIVERGENCE,
            Error::Core(e) => match e {
                CoreError::Divergence { .. }
                | CoreError::StageDivergence { .. }
                | CoreError::NotPositiveSemiDefinite { .. }
                | CoreError::SingularInnovation
                | CoreError::NonFinite { .. } => EXIT_DIVERGENCE,
                _ => EXIT_USAGE,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cipg_core::Stage;

    #[test]
    fn exit_codes() {
        let div = Error::Core(CoreError::StageDivergence {
            stage: Stage::Velocity,
            epoch: 3,
            iteration: 1,
        });
        assert_eq!(div.exit_code(), 1);
        assert_eq!(Error::Core(CoreError::Scenario("x".into())).exit_code(), 2);
        assert_eq!(Error::io("a.csv", std::io::Error::from(std::io::ErrorKind::NotFound)).exit_code(), 2);
        assert_eq!(Error::io("a.csv", std::io::Error::from(std::io::ErrorKind::PermissionDenied)).exit_code(), 3);
    }
}
