use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or invalid admin token")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("daily cap of {cap} submissions reached")]
    CapReached { cap: u32 },
    #[error("finalization blocked: {} sample(s) do not have exactly 3 annotations", .0.len())]
    Incomplete(Vec<String>),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Internal(format!("{}: {e}", path.display()))
    }

    pub fn status_code(&self) -> u16 {
        match self {
            Self::BadRequest(_) => 400,
            Self::Unauthorized => 401,
            Self::Forbidden(_) => 403,
            Self::NotFound(_) => 404,
            Self::Conflict(_) | Self::Incomplete(_) => 409,
            Self::CapReached { .. } => 429,
            Self::Internal(_) => 500,
        }
    }
}
