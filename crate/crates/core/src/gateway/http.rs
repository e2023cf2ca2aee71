//! HTTP backends: OpenAI-compatible chat/embeddings, a Custom Search style snippet API and
//! the ConceptNet relatedness endpoint.

use std::path::Path;
use std::time::Duration;

use base64::Engine as _;
use reqwest::blocking::{Client, RequestBuilder, Response};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, EmbedInput, EmbeddingBackend, RelatednessBackend, SearchBackend};

fn client(timeout: Duration) -> Result<Client, BackendError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| BackendError::Transport(e.to_string()))
}

fn send(builder: RequestBuilder) -> Result<Value, BackendError> {
    let response: Response = builder
        .send()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = response.status();
    let body = response
        .text()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(BackendError::Status {
            status: status.as_u16(),
            body,
        });
    }
    serde_json::from_str(&body).map_err(|e| BackendError::Malformed(format!("{e}: {body}")))
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/png",
    }
}

fn data_url(mime: &str, bytes: &[u8]) -> String {
    format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )
}

/// Request body for `POST /chat/completions`. Images are inlined as base64 data URLs.
pub fn chat_wire_body(request: &ChatRequest) -> Result<Value, BackendError> {
    let messages = request
        .messages
        .iter()
        .map(|m| {
            if m.images.is_empty() {
                return Ok(json!({"role": m.role, "content": m.text}));
            }
            let mut parts = vec![json!({"type": "text", "text": m.text})];
            for path in &m.images {
                let bytes = std::fs::read(path).map_err(|e| {
                    BackendError::Malformed(format!("image {}: {e}", path.display()))
                })?;
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": data_url(mime_for(path), &bytes)}
                }));
            }
            Ok(json!({"role": m.role, "content": parts}))
        })
        .collect::<Result<Vec<_>, BackendError>>()?;
    Ok(json!({
        "model": request.model_id,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_new_tokens,
        "stream": false,
    }))
}

fn completion_text(body: &Value) -> Result<String, BackendError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::Malformed(format!("no completion in {body}"))),
    }
}

pub struct OpenAiChat {
    base_url: String,
    api_key: Option<String>,
    client: Client,
}

impl OpenAiChat {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client: client(timeout)?,
        })
    }
}

impl ChatBackend for OpenAiChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = chat_wire_body(request)?;
        let mut builder = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        completion_text(&send(builder)?)
    }
}

/// `POST /embeddings`. Images are sent as data URLs in `input`, which is what CLIP-style
/// servers behind an OpenAI-compatible facade accept.
pub struct OpenAiEmbeddings {
    base_url: String,
    api_key: Option<String>,
    client: Client,
}

impl OpenAiEmbeddings {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client: client(timeout)?,
        })
    }
}

pub fn embedding_wire_body(model: &str, input: &EmbedInput) -> Value {
    let input = match input {
        EmbedInput::Text(t) => t.clone(),
        EmbedInput::Image { name, bytes } => data_url(mime_for(Path::new(name)), bytes),
    };
    json!({"model": model, "input": input})
}

impl EmbeddingBackend for OpenAiEmbeddings {
    fn embed(&self, model: &str, input: &EmbedInput) -> Result<Vec<f64>, BackendError> {
        let mut builder = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&embedding_wire_body(model, input));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let body = send(builder)?;
        serde_json::from_value(body["data"][0]["embedding"].clone())
            .map_err(|e| BackendError::Malformed(format!("embedding: {e}")))
    }
}

/// Custom Search JSON API: `GET ?key=&cx=&q=` returning `items[].snippet`.
pub struct WebSearch {
    base_url: String,
    api_key: Option<String>,
    engine_id: Option<String>,
    max_results: usize,
    client: Client,
}

impl WebSearch {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        engine_id: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            base_url: base_url.to_string(),
            api_key,
            engine_id,
            max_results: 3,
            client: client(timeout)?,
        })
    }
}

impl SearchBackend for WebSearch {
    fn search(&self, query: &str) -> Result<Vec<String>, BackendError> {
        let mut params = vec![("q", query.to_string()), ("num", self.max_results.to_string())];
        if let Some(k) = &self.api_key {
            params.push(("key", k.clone()));
        }
        if let Some(cx) = &self.engine_id {
            params.push(("cx", cx.clone()));
        }
        let body = send(self.client.get(&self.base_url).query(&params))?;
        Ok(body["items"]
            .as_array()
            .map(|items| {
                items
                    .iter()
                    .filter_map(|i| i["snippet"].as_str().map(str::to_string))
                    .collect()
            })
            .unwrap_or_default())
    }
}

/// `GET /relatedness?node1=/c/en/a&node2=/c/en/b` returning `{"value": x}`.
pub struct ConceptNet {
    base_url: String,
    language: String,
    client: Client,
}

impl ConceptNet {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            language: "en".into(),
            client: client(timeout)?,
        })
    }
}

impl RelatednessBackend for ConceptNet {
    fn relatedness(&self, a: &str, b: &str) -> Result<Option<f64>, BackendError> {
        let node = |t: &str| format!("/c/{}/{}", self.language, t);
        let builder = self
            .client
            .get(format!("{}/relatedness", self.base_url))
            .query(&[("node1", node(a)), ("node2", node(b))]);
        match send(builder) {
            Ok(body) => Ok(body["value"].as_f64()),
            Err(BackendError::Status { status: 404, .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}
