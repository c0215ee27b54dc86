use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("dataset {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] cfhf_core::Error),
}

impl CliError {
    /// 2 usage, 3 config, 4 dataset, 5 I/O, 6 numerical failure,
    /// 7 invalid physical input.
    pub fn exit_code(&self) -> i32 {
        use cfhf_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Config { .. } => 3,
            CliError::Dataset { .. } => 4,
            CliError::Io { .. } => 5,
            CliError::Core(e) => match e {
                E::EigenConvergence
                | E::SingularNormalMatrix { .. }
                | E::IterationLimit { .. }
                | E::Infeasible(_)
                | E::AmbiguousLabel { .. }
                | E::BrokenSymmetry { .. }
                | E::NotHermitian { .. }
                | E::ZeroDenominator(..) => 6,
                _ => 7,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
