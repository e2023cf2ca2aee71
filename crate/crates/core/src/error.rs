use std::path::PathBuf;

use thiserror::Error;

use crate::gateway::GatewayError;

/// Errors raised by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("split infeasible: tag '{tag}' needs {needed} test posts but only {available} slots remain")]
    InfeasibleSplit {
        tag: String,
        needed: usize,
        available: usize,
    },

    #[error("template error: {0}")]
    Template(String),

    #[error("post {post_id}: {message}")]
    Post { post_id: String, message: String },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::Invalid(message.into())
    }

    pub fn post(post_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Post {
            post_id: post_id.into(),
            message: message.into(),
        }
    }

    /// True when the failure originates from an external model or knowledge service.
    pub fn is_external(&self) -> bool {
        match self {
            Self::Gateway(e) => e.is_external(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
