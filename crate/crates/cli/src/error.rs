use std::fmt;

use memeguard_annotation::ServiceError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_EXTERNAL: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad input, configuration or usage.
    Invalid(String),
    /// A model, search or knowledge service failed (or a frozen cache had no answer).
    External(String),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub fn external(msg: impl Into<String>) -> Self {
        Self::External(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => EXIT_INVALID,
            Self::External(_) => EXIT_EXTERNAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(m) => write!(f, "{m}"),
            Self::External(m) => write!(f, "external service failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<memeguard::Error> for CliError {
    fn from(e: memeguard::Error) -> Self {
        if e.is_external() {
            Self::External(e.to_string())
        } else {
            Self::Invalid(e.to_string())
        }
    }
}

impl From<memeguard::gateway::GatewayError> for CliError {
    fn from(e: memeguard::gateway::GatewayError) -> Self {
        memeguard::Error::from(e).into()
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
