use thiserror::Error;

use crate::diff::DiffError;
use crate::gateway::GatewayError;
use crate::model::ModelError;
use crate::scoping::ScopingError;

/// Failure of one pipeline stage for one sample.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scoping(#[from] ScopingError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("response contains no parseable patch")]
    NoPatches,
    #[error("{0}")]
    Config(String),
}
