use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures of a command, split by the exit status they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    /// Unreadable input: malformed JSON, CSV or flag values.
    #[error("{0}")]
    Parse(String),

    /// Well-formed input the mathematics rejects: an invalid measure, a
    /// failed fit, an estimate outside its domain.
    #[error("{0}")]
    Domain(String),

    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<CliError> },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 1 for domain failures, 2 for I/O and parse failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse(_) => 2,
            CliError::Domain(_) => 1,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn in_stage(stage: &'static str) -> impl FnOnce(selfsim::Error) -> CliError {
        move |e| CliError::Stage { stage, source: Box::new(e.into()) }
    }
}

impl From<selfsim::Error> for CliError {
    fn from(e: selfsim::Error) -> Self {
        use selfsim::Error as E;
        match e {
            E::Io(source) => CliError::Io { path: PathBuf::new(), source },
            E::Parse(_) | E::MalformedMeasure(_) | E::InvalidKernel(_) => CliError::Parse(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}
