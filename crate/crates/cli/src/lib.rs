//! Command implementations behind the `paretoslider` binary and the
//! `sliderd` HTTP service.

pub mod commands;
pub mod sliderd;

use paretoslider_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("{0}")]
    Usage(String),

    #[error("server error: {0}")]
    Serve(String),
}

impl CliError {
    /// 0 ok, 2 config, 3 compatibility, 4 corruption, 5 comparison mismatch,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Preference(_) => 2,
                Error::Incompatible(_) | Error::Shape(_) => 3,
                Error::Corrupt(_) => 4,
                Error::Mismatch(_) => 5,
                _ => 1,
            },
            CliError::Serve(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
