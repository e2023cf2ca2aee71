//! Fixture-driven backends for tests and offline dry runs.
//!
//! A [`StubSpec`] is plain JSON: chat rules keyed on substrings of the last user message,
//! fixed embedding tables (anything not listed gets a deterministic pseudo-random vector),
//! canned search snippets and a relatedness table.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ChatBackend, ChatRequest, EmbedInput, EmbeddingBackend, RelatednessBackend, SearchBackend};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatRule {
    /// Restrict the rule to one model id.
    #[serde(default)]
    pub model: Option<String>,
    /// Case-insensitive substring of the last user message.
    pub contains: String,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StubSpec {
    #[serde(default)]
    pub chat_rules: Vec<ChatRule>,
    #[serde(default)]
    pub chat_default: Option<String>,
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    #[serde(default)]
    pub text_embeddings: BTreeMap<String, Vec<f64>>,
    /// Keyed by image file name.
    #[serde(default)]
    pub image_embeddings: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub search: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub relatedness: Vec<(String, String, f64)>,
}

fn default_dim() -> usize {
    16
}

impl Default for StubSpec {
    fn default() -> Self {
        Self {
            chat_rules: Vec::new(),
            chat_default: None,
            embedding_dim: default_dim(),
            text_embeddings: BTreeMap::new(),
            image_embeddings: BTreeMap::new(),
            search: BTreeMap::new(),
            relatedness: Vec::new(),
        }
    }
}

impl StubSpec {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Malformed(format!("stub file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Malformed(format!("stub file {}: {e}", path.display())))
    }
}

/// Deterministic vector in [-1, 1]^dim derived from `seed` and `model`.
pub fn pseudo_embedding(model: &str, seed: &[u8], dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(model.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed);
    let digest = hasher.finalize();
    let mut s = [0u8; 32];
    s.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(s);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct StubBackend {
    spec: StubSpec,
}

impl StubBackend {
    pub fn new(spec: StubSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &StubSpec {
        &self.spec
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let last = request.last_user_text().unwrap_or_default().to_lowercase();
        self.spec
            .chat_rules
            .iter()
            .find(|r| {
                r.model.as_deref().is_none_or(|m| m == request.model_id)
                    && last.contains(&r.contains.to_lowercase())
            })
            .map(|r| r.reply.clone())
            .or_else(|| self.spec.chat_default.clone())
            .ok_or_else(|| BackendError::Status {
                status: 404,
                body: "no stub rule matches the request".into(),
            })
    }
}

impl EmbeddingBackend for StubBackend {
    fn embed(&self, model: &str, input: &EmbedInput) -> Result<Vec<f64>, BackendError> {
        let dim = self.spec.embedding_dim;
        Ok(match input {
            EmbedInput::Text(t) => self
                .spec
                .text_embeddings
                .get(t)
                .cloned()
                .unwrap_or_else(|| pseudo_embedding(model, t.as_bytes(), dim)),
            EmbedInput::Image { name, bytes } => self
                .spec
                .image_embeddings
                .get(name)
                .cloned()
                .unwrap_or_else(|| pseudo_embedding(model, bytes, dim)),
        })
    }
}

impl SearchBackend for StubBackend {
    fn search(&self, query: &str) -> Result<Vec<String>, BackendError> {
        Ok(self.spec.search.get(query).cloned().unwrap_or_default())
    }
}

impl RelatednessBackend for StubBackend {
    fn relatedness(&self, a: &str, b: &str) -> Result<Option<f64>, BackendError> {
        Ok(self
            .spec
            .relatedness
            .iter()
            .find(|(x, y, _)| (x == a && y == b) || (x == b && y == a))
            .map(|(_, _, v)| *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    #[test]
    fn rules_match_last_user_message() {
        let spec: StubSpec = serde_json::from_str(
            r#"{"chat_rules":[{"contains":"Cannibal cafe","reply":"dangerous"},
                              {"model":"tagger","contains":"","reply":"a, b"}],
                "chat_default":"normal"}"#,
        )
        .unwrap();
        let stub = StubBackend::new(spec);
        let req = ChatRequest::new("gpt", 30)
            .message(ChatMessage::user("Title: cannibal cafe menu"))
            .message(ChatMessage::assistant("hateful"))
            .message(ChatMessage::user("Title: CANNIBAL CAFE menu"));
        assert_eq!(stub.complete(&req).unwrap(), "dangerous");
        let other = ChatRequest::new("tagger", 30).message(ChatMessage::user("x"));
        assert_eq!(stub.complete(&other).unwrap(), "a, b");
        let fallback = ChatRequest::new("gpt", 30).message(ChatMessage::user("x"));
        assert_eq!(stub.complete(&fallback).unwrap(), "normal");
    }

    #[test]
    fn unknown_inputs_get_stable_vectors() {
        let stub = StubBackend::default();
        let a = stub.embed("clip", &EmbedInput::Text("x".into())).unwrap();
        let b = stub.embed("clip", &EmbedInput::Text("x".into())).unwrap();
        let c = stub.embed("other", &EmbedInput::Text("x".into())).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 16);
    }
}
