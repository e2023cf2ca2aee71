use std::fmt;

use super::{ChatRequest, EmbedInput};

/// Failure reported by a single backend call, before any retry decision.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendError {
    /// Connection, timeout or other transport-level failure.
    Transport(String),
    /// Non-success HTTP status.
    Status { status: u16, body: String },
    /// A response that could not be interpreted.
    Malformed(String),
    NotConfigured(&'static str),
}

impl BackendError {
    /// Transport failures, rate limits and server errors are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) | BackendError::NotConfigured(_) => false,
        }
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendError::Transport(m) => write!(f, "transport failure: {m}"),
            BackendError::Status { status, body } => write!(f, "HTTP {status}: {body}"),
            BackendError::Malformed(m) => write!(f, "malformed response: {m}"),
            BackendError::NotConfigured(what) => write!(f, "{what} endpoint not configured"),
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

pub trait EmbeddingBackend: Send + Sync {
    /// Raw (not necessarily normalized) embedding.
    fn embed(&self, model: &str, input: &EmbedInput) -> Result<Vec<f64>, BackendError>;
}

pub trait SearchBackend: Send + Sync {
    /// Result snippets, best first.
    fn search(&self, query: &str) -> Result<Vec<String>, BackendError>;
}

pub trait RelatednessBackend: Send + Sync {
    /// `Ok(None)` when either term is unknown to the service. Terms arrive slugified.
    fn relatedness(&self, a: &str, b: &str) -> Result<Option<f64>, BackendError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self(request)
    }
}

impl<F> EmbeddingBackend for F
where
    F: Fn(&str, &EmbedInput) -> Result<Vec<f64>, BackendError> + Send + Sync,
{
    fn embed(&self, model: &str, input: &EmbedInput) -> Result<Vec<f64>, BackendError> {
        self(model, input)
    }
}

impl<F> SearchBackend for F
where
    F: Fn(&str) -> Result<Vec<String>, BackendError> + Send + Sync,
{
    fn search(&self, query: &str) -> Result<Vec<String>, BackendError> {
        self(query)
    }
}

impl<F> RelatednessBackend for F
where
    F: Fn(&str, &str) -> Result<Option<f64>, BackendError> + Send + Sync,
{
    fn relatedness(&self, a: &str, b: &str) -> Result<Option<f64>, BackendError> {
        self(a, b)
    }
}

/// Placeholder for endpoints that were left out of the configuration.
pub(crate) struct Unconfigured(pub &'static str);

impl ChatBackend for Unconfigured {
    fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Err(BackendError::NotConfigured(self.0))
    }
}

impl EmbeddingBackend for Unconfigured {
    fn embed(&self, _: &str, _: &EmbedInput) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::NotConfigured(self.0))
    }
}

impl SearchBackend for Unconfigured {
    fn search(&self, _: &str) -> Result<Vec<String>, BackendError> {
        Err(BackendError::NotConfigured(self.0))
    }
}

impl RelatednessBackend for Unconfigured {
    fn relatedness(&self, _: &str, _: &str) -> Result<Option<f64>, BackendError> {
        Err(BackendError::NotConfigured(self.0))
    }
}
