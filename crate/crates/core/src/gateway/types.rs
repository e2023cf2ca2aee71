use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<PathBuf>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn with_image(mut self, path: impl Into<PathBuf>) -> Self {
        self.images.push(path.into());
        self
    }
}

/// Sampling temperature used for every classification and generation call.
pub const DEFAULT_TEMPERATURE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, max_new_tokens: u32) -> Self {
        Self {
            model_id: model_id.into(),
            messages: Vec::new(),
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens,
        }
    }

    pub fn message(mut self, message: ChatMessage) -> Self {
        self.messages.push(message);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.max_new_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be >= 1".into()));
        }
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("request has no messages".into()));
        }
        let systems: Vec<usize> = self
            .messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.role == Role::System)
            .map(|(i, _)| i)
            .collect();
        match systems.as_slice() {
            [] | [0] => Ok(()),
            _ => Err(GatewayError::InvalidRequest(
                "at most one system message is allowed and it must come first".into(),
            )),
        }
    }

    /// Concatenated text of every message, for inspection and tests.
    pub fn full_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.text.as_str())
    }
}

/// A real vector from an embedding endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dim: usize,
    pub normalized: bool,
}

impl EmbeddingVector {
    /// Scale `values` to unit L2 norm. Fails on an all-zero or non-finite vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self, GatewayError> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GatewayError::Malformed(
                "embedding has zero or non-finite norm".into(),
            ));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / norm).collect();
        Ok(Self {
            dim: values.len(),
            values,
            normalized: true,
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity, clamped to [-1, 1].
    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let sim = if self.normalized && other.normalized {
            dot
        } else {
            let denom = self.norm() * other.norm();
            if denom == 0.0 {
                return 0.0;
            }
            dot / denom
        };
        sim.clamp(-1.0, 1.0)
    }
}

/// Payload handed to an embedding backend.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedInput {
    Text(String),
    Image {
        /// File name, kept for backends that key fixtures by name.
        name: String,
        bytes: Vec<u8>,
    },
}
