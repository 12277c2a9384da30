use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Protocol(#[from] privaflow_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(
        "{source}; deposit at least {suggested_per_driver} zero ciphertexts per driver \
         (keygen with pool_epochs = {suggested_pool_epochs}) or let drivers replenish"
    )]
    PoolExhausted {
        source: privaflow_core::Error,
        suggested_per_driver: usize,
        suggested_pool_epochs: usize,
    },

    /// Decrypted output disagrees with what the protocol guarantees.
    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// Process exit code: 2 config, 3 protocol, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Protocol(e) if e.is_config() => 2,
            Error::Protocol(_) | Error::PoolExhausted { .. } | Error::Integrity(_) => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}
