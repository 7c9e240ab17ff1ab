use thiserror::Error;

use crate::eval::EvalError;
use crate::graph::GraphError;
use crate::sampling::SamplingError;
use crate::training::TrainError;
use crate::transport::{TransportError, WorldError};

/// Top-level error; every variant names the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("world: {0}")]
    World(#[from] WorldError),
    #[error("sampling: {0}")]
    Sampling(#[from] SamplingError),
    #[error("training: {0}")]
    Training(#[from] TrainError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
