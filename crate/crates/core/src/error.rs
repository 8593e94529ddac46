use thiserror::Error;

use crate::data::DataError;
use crate::engine::EngineError;
use crate::regulation::RegulationError;
use crate::significance::SignificanceError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Regulation(#[from] RegulationError),
    #[error(transparent)]
    Significance(#[from] SignificanceError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Process exit codes for the command-line tool.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Regulation(RegulationError::InvalidParameter(_))
            | Error::Data(DataError::InvalidParameter(_)) => exit::CONFIG,
            Error::Engine(EngineError::InvalidParameter(_) | EngineError::UnknownArchitecture(_)) => {
                exit::CONFIG
            }
            Error::NonFiniteLoss { .. } | Error::Engine(_) => exit::NUMERIC,
            _ => exit::DATA,
        }
    }

    pub(crate) fn file(path: &std::path::Path, reason: impl ToString) -> Self {
        Error::File {
            path: path.display().to_string(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
