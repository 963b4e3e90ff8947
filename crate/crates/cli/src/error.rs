use std::io;
use std::path::PathBuf;

use contact_core::ContactError;

use crate::scenario::ConfigError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VERIFICATION_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INTEGRATION: i32 = 3;
    pub const SINGULARITY: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("integration failed: {0}")]
    Integration(ContactError),
    #[error("singularity: {0}")]
    Singularity(ContactError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Integration(_) => exit::INTEGRATION,
            Self::Singularity(_) => exit::SINGULARITY,
            Self::Io { .. } => exit::IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

impl From<ContactError> for CliError {
    fn from(e: ContactError) -> Self {
        match e {
            ContactError::SingularMeasure { .. }
            | ContactError::Collapse { .. }
            | ContactError::RiccatiPole { .. }
            | ContactError::SingularChart(_)
            | ContactError::Branch(_) => Self::Singularity(e),
            _ => Self::Integration(e),
        }
    }
}
