//! Clients for every external model and knowledge service the pipeline talks to.
//!
//! All calls go through [`Gateway`], which adds a content-addressed response cache, bounded
//! parallelism, per-key request coalescing and retry with exponential backoff. Backends are
//! pluggable: HTTP clients for OpenAI-compatible, search and ConceptNet services live in
//! [`http`], fixture-driven stand-ins in [`stub`].

mod backend;
mod cache;
pub mod http;
mod settings;
pub mod stub;
mod types;

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{BackendError, ChatBackend, EmbeddingBackend, RelatednessBackend, SearchBackend};
pub use cache::{Cache, CacheEntry, CacheKey, CacheMode, EndpointKind};
pub use settings::{BackendKind, GatewaySettings, ModelIds};
pub use types::{ChatMessage, ChatRequest, EmbedInput, EmbeddingVector, Role, DEFAULT_TEMPERATURE};

use backend::Unconfigured;

/// Upper bound on the length of a tag expansion, in characters.
pub const EXPANSION_MAX_CHARS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("{0} endpoint not configured")]
    NotConfigured(&'static str),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("model {model} returned an empty completion")]
    EmptyCompletion { model: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("embedding dimension drift for model {model}: expected {expected}, got {got}")]
    DimensionDrift {
        model: String,
        expected: usize,
        got: usize,
    },
    #[error("cache miss for {kind}/{digest} while the cache is frozen")]
    CacheMiss { kind: &'static str, digest: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    /// Failures attributable to the remote service (as opposed to local configuration).
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            GatewayError::Transport { .. }
                | GatewayError::Http { .. }
                | GatewayError::EmptyCompletion { .. }
                | GatewayError::Malformed(_)
                | GatewayError::CacheMiss { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            free: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("semaphore poisoned");
            while *free == 0 {
                free = self.cv.wait(free).expect("semaphore poisoned");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("semaphore poisoned") += 1;
        self.cv.notify_one();
        out
    }
}

/// A chat completion together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub latency_ms: u64,
    pub cached: bool,
}

struct Fetched {
    response: Value,
    latency_ms: u64,
    cached: bool,
}

pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embeddings: Arc<dyn EmbeddingBackend>,
    search: Arc<dyn SearchBackend>,
    relatedness: Arc<dyn RelatednessBackend>,
    cache: Cache,
    retry: RetryPolicy,
    pool: Semaphore,
    parallelism: usize,
    key_locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    dims: Mutex<HashMap<String, usize>>,
    warnings: Mutex<Vec<String>>,
    backend_calls: AtomicUsize,
}

pub struct GatewayBuilder {
    chat: Arc<dyn ChatBackend>,
    embeddings: Arc<dyn EmbeddingBackend>,
    search: Arc<dyn SearchBackend>,
    relatedness: Arc<dyn RelatednessBackend>,
    cache: Cache,
    retry: RetryPolicy,
    parallelism: usize,
}

impl GatewayBuilder {
    pub fn chat(mut self, backend: impl ChatBackend + 'static) -> Self {
        self.chat = Arc::new(backend);
        self
    }

    pub fn embeddings(mut self, backend: impl EmbeddingBackend + 'static) -> Self {
        self.embeddings = Arc::new(backend);
        self
    }

    pub fn search(mut self, backend: impl SearchBackend + 'static) -> Self {
        self.search = Arc::new(backend);
        self
    }

    pub fn relatedness(mut self, backend: impl RelatednessBackend + 'static) -> Self {
        self.relatedness = Arc::new(backend);
        self
    }

    pub fn chat_arc(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.chat = backend;
        self
    }

    pub fn embeddings_arc(mut self, backend: Arc<dyn EmbeddingBackend>) -> Self {
        self.embeddings = backend;
        self
    }

    pub fn search_arc(mut self, backend: Arc<dyn SearchBackend>) -> Self {
        self.search = backend;
        self
    }

    pub fn relatedness_arc(mut self, backend: Arc<dyn RelatednessBackend>) -> Self {
        self.relatedness = backend;
        self
    }

    pub fn cache(mut self, cache: Cache) -> Self {
        self.cache = cache;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn parallelism(mut self, n: usize) -> Self {
        self.parallelism = n;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            chat: self.chat,
            embeddings: self.embeddings,
            search: self.search,
            relatedness: self.relatedness,
            cache: self.cache,
            retry: self.retry,
            pool: Semaphore::new(self.parallelism),
            parallelism: self.parallelism.max(1),
            key_locks: Mutex::default(),
            dims: Mutex::default(),
            warnings: Mutex::default(),
            backend_calls: AtomicUsize::new(0),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// ConceptNet node slug: lowercase, whitespace runs become underscores.
pub fn slugify(term: &str) -> String {
    term.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}

impl Gateway {
    pub fn builder() -> GatewayBuilder {
        GatewayBuilder {
            chat: Arc::new(Unconfigured("chat")),
            embeddings: Arc::new(Unconfigured("embeddings")),
            search: Arc::new(Unconfigured("search")),
            relatedness: Arc::new(Unconfigured("conceptnet")),
            cache: Cache::in_memory(),
            retry: RetryPolicy::default(),
            parallelism: 8,
        }
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    /// Upper bound on concurrent backend calls.
    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    /// Number of times a backend was actually invoked (cache hits excluded).
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("warnings poisoned").clone()
    }

    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().expect("warnings poisoned"))
    }

    pub(crate) fn warn(&self, message: String) {
        tracing::warn!("{message}");
        self.warnings.lock().expect("warnings poisoned").push(message);
    }

    fn key_lock(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .expect("key locks poisoned")
            .entry(key.clone())
            .or_default()
            .clone()
    }

    fn release_key_lock(&self, key: &CacheKey, lock: Arc<Mutex<()>>) {
        let mut locks = self.key_locks.lock().expect("key locks poisoned");
        // map + our handle: nobody else is waiting on this key
        if Arc::strong_count(&lock) == 2 {
            locks.remove(key);
        }
    }

    fn with_retry(
        &self,
        mut call: impl FnMut() -> Result<Value, BackendError>,
    ) -> Result<Value, GatewayError> {
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.backend_calls.fetch_add(1, Ordering::SeqCst);
            let err = match self.pool.run(&mut call) {
                Ok(v) => return Ok(v),
                Err(e) => e,
            };
            if err.is_retryable() && attempt < max {
                tracing::debug!(attempt, error = %err, "retrying");
                std::thread::sleep(self.retry.delay(attempt));
                continue;
            }
            return Err(match err {
                BackendError::Transport(message) => GatewayError::Transport {
                    attempts: attempt,
                    message,
                },
                BackendError::Status { status, body } => GatewayError::Http { status, body },
                BackendError::Malformed(m) => GatewayError::Malformed(m),
                BackendError::NotConfigured(w) => GatewayError::NotConfigured(w),
            });
        }
    }

    /// Cache lookup, then (on a miss) a coalesced, retried backend call whose accepted
    /// response is recorded.
    fn fetch(
        &self,
        kind: EndpointKind,
        request: Value,
        call: impl FnMut() -> Result<Value, BackendError>,
        accept: impl Fn(&Value) -> Result<(), GatewayError>,
    ) -> Result<Fetched, GatewayError> {
        let key = CacheKey::new(kind, &request);
        let lock = self.key_lock(&key);
        let result = {
            let _guard = lock.lock().expect("key lock poisoned");
            self.fetch_locked(&key, kind, request, call, accept)
        };
        self.release_key_lock(&key, lock);
        result
    }

    fn fetch_locked(
        &self,
        key: &CacheKey,
        kind: EndpointKind,
        request: Value,
        call: impl FnMut() -> Result<Value, BackendError>,
        accept: impl Fn(&Value) -> Result<(), GatewayError>,
    ) -> Result<Fetched, GatewayError> {
        if let Some(hit) = self.cache.get(key)? {
            return Ok(Fetched {
                response: hit.response,
                latency_ms: hit.latency_ms,
                cached: true,
            });
        }
        if self.cache.mode() == CacheMode::Frozen {
            return Err(GatewayError::CacheMiss {
                kind: kind.as_str(),
                digest: key.digest.clone(),
            });
        }
        let start = Instant::now();
        let response = self.with_retry(call)?;
        accept(&response)?;
        let latency_ms = start.elapsed().as_millis() as u64;
        self.cache.put(
            key,
            CacheEntry {
                kind,
                request,
                response: response.clone(),
                latency_ms,
            },
        )?;
        Ok(Fetched {
            response,
            latency_ms,
            cached: false,
        })
    }

    fn canonical_chat(request: &ChatRequest) -> Result<Value, GatewayError> {
        let messages = request
            .messages
            .iter()
            .map(|m| {
                let images = m
                    .images
                    .iter()
                    .map(|p| {
                        std::fs::read(p).map(|b| sha256_hex(&b)).map_err(|e| {
                            GatewayError::InvalidRequest(format!(
                                "image {} not readable: {e}",
                                p.display()
                            ))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(json!({"role": m.role, "text": m.text, "images": images}))
            })
            .collect::<Result<Vec<_>, GatewayError>>()?;
        Ok(json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "max_new_tokens": request.max_new_tokens,
            "messages": messages,
        }))
    }

    pub fn chat_complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.chat_complete_detailed(request).map(|c| c.text)
    }

    pub fn chat_complete_detailed(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        request.validate()?;
        let canonical = Self::canonical_chat(request)?;
        let model = request.model_id.clone();
        let fetched = self.fetch(
            EndpointKind::Chat,
            canonical,
            || self.chat.complete(request).map(|text| json!({ "text": text })),
            |v| match v["text"].as_str() {
                Some(t) if !t.trim().is_empty() => Ok(()),
                _ => Err(GatewayError::EmptyCompletion {
                    model: model.clone(),
                }),
            },
        )?;
        let text = fetched.response["text"]
            .as_str()
            .ok_or_else(|| GatewayError::Malformed("cached chat entry has no text".into()))?
            .to_string();
        Ok(Completion {
            text,
            latency_ms: fetched.latency_ms,
            cached: fetched.cached,
        })
    }

    fn embed(
        &self,
        kind: EndpointKind,
        model: &str,
        canonical: Value,
        input: EmbedInput,
    ) -> Result<EmbeddingVector, GatewayError> {
        let fetched = self.fetch(
            kind,
            canonical,
            || {
                self.embeddings
                    .embed(model, &input)
                    .map(|v| json!({ "embedding": v }))
            },
            |v| match v["embedding"].as_array() {
                Some(a) if !a.is_empty() => Ok(()),
                _ => Err(GatewayError::Malformed("empty embedding".into())),
            },
        )?;
        let raw: Vec<f64> = serde_json::from_value(fetched.response["embedding"].clone())
            .map_err(|e| GatewayError::Malformed(format!("embedding: {e}")))?;
        let vector = EmbeddingVector::normalized(raw)?;

        let mut dims = self.dims.lock().expect("dims poisoned");
        let expected = *dims.entry(model.to_string()).or_insert(vector.dim);
        if expected != vector.dim {
            return Err(GatewayError::DimensionDrift {
                model: model.to_string(),
                expected,
                got: vector.dim,
            });
        }
        Ok(vector)
    }

    pub fn embed_text(&self, model: &str, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::InvalidRequest("cannot embed empty text".into()));
        }
        self.embed(
            EndpointKind::EmbedText,
            model,
            json!({"model": model, "text": text}),
            EmbedInput::Text(text.to_string()),
        )
    }

    pub fn embed_image(&self, model: &str, path: &Path) -> Result<EmbeddingVector, GatewayError> {
        let bytes = std::fs::read(path).map_err(|e| {
            GatewayError::InvalidRequest(format!("image {} not readable: {e}", path.display()))
        })?;
        if bytes.is_empty() {
            return Err(GatewayError::InvalidRequest(format!("image {} is empty", path.display())));
        }
        let digest = sha256_hex(&bytes);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.embed(
            EndpointKind::EmbedImage,
            model,
            json!({"model": model, "image_sha256": digest}),
            EmbedInput::Image { name, bytes },
        )
    }

    /// Short search-derived description of a tag. Never fails: on service trouble the
    /// expansion is empty and a warning is recorded.
    pub fn expand_tag(&self, tag: &str) -> String {
        let tag = tag.trim();
        if tag.is_empty() {
            return String::new();
        }
        let fetched = self.fetch(
            EndpointKind::Search,
            json!({ "query": tag }),
            || self.search.search(tag).map(|s| json!({ "snippets": s })),
            |_| Ok(()),
        );
        match fetched {
            Ok(f) => {
                let snippets: Vec<String> =
                    serde_json::from_value(f.response["snippets"].clone()).unwrap_or_default();
                let joined = snippets
                    .iter()
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ");
                if joined.is_empty() {
                    self.warn(format!("tag expansion for '{tag}' is empty"));
                }
                truncate_chars(&joined, EXPANSION_MAX_CHARS)
            }
            Err(e) => {
                self.warn(format!("tag expansion for '{tag}' unavailable: {e}"));
                String::new()
            }
        }
    }

    /// ConceptNet relatedness in [-1, 1]. Unknown terms score 0 with a warning.
    pub fn conceptnet_relatedness(&self, a: &str, b: &str) -> Result<f64, GatewayError> {
        let (a, b) = (slugify(a), slugify(b));
        if a.is_empty() || b.is_empty() {
            return Err(GatewayError::InvalidRequest("relatedness terms must be non-empty".into()));
        }
        if a == b {
            return Ok(1.0);
        }
        let (first, second) = if a <= b { (a, b) } else { (b, a) };
        let fetched = self.fetch(
            EndpointKind::Conceptnet,
            json!({ "terms": [first, second] }),
            || {
                self.relatedness
                    .relatedness(&first, &second)
                    .map(|v| json!({ "value": v }))
            },
            |_| Ok(()),
        )?;
        match fetched.response["value"].as_f64() {
            Some(v) => Ok(v.clamp(-1.0, 1.0)),
            None => {
                self.warn(format!("conceptnet does not know '{first}' or '{second}'"));
                Ok(0.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", 30).message(ChatMessage::user(text))
    }

    #[test]
    fn stub_passthrough_then_cache_hit() {
        let gw = Gateway::builder()
            .chat(|_: &ChatRequest| Ok("toxic".to_string()))
            .build();
        assert_eq!(gw.chat_complete(&req("q")).unwrap(), "toxic");
        assert_eq!(gw.backend_calls(), 1);
        let again = gw.chat_complete_detailed(&req("q")).unwrap();
        assert_eq!(again.text, "toxic");
        assert!(again.cached);
        assert_eq!(gw.backend_calls(), 1);
    }

    #[test]
    fn transport_failures_retry_five_times() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let gw = Gateway::builder()
            .chat(move |_: &ChatRequest| {
                c.fetch_add(1, Ordering::SeqCst);
                Err(BackendError::Transport("connection refused".into()))
            })
            .retry(RetryPolicy::immediate(5))
            .build();
        let err = gw.chat_complete(&req("q")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 5, .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn client_errors_do_not_retry() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let gw = Gateway::builder()
            .chat(move |_: &ChatRequest| {
                c.fetch_add(1, Ordering::SeqCst);
                Err(BackendError::Status { status: 400, body: "bad model".into() })
            })
            .retry(RetryPolicy::immediate(5))
            .build();
        let err = gw.chat_complete(&req("q")).unwrap_err();
        assert_eq!(err, GatewayError::Http { status: 400, body: "bad model".into() });
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transient_failure_recovers() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let gw = Gateway::builder()
            .chat(move |_: &ChatRequest| {
                if c.fetch_add(1, Ordering::SeqCst) < 2 {
                    Err(BackendError::Status { status: 503, body: String::new() })
                } else {
                    Ok("normal".into())
                }
            })
            .retry(RetryPolicy::immediate(5))
            .build();
        assert_eq!(gw.chat_complete(&req("q")).unwrap(), "normal");
    }

    #[test]
    fn empty_completion_is_an_error_and_not_cached() {
        let gw = Gateway::builder().chat(|_: &ChatRequest| Ok("  ".to_string())).build();
        assert!(matches!(gw.chat_complete(&req("q")), Err(GatewayError::EmptyCompletion { .. })));
        assert_eq!(gw.cache().len_in_memory(), 0);
    }

    #[test]
    fn frozen_cache_miss_never_reaches_backend() {
        let gw = Gateway::builder()
            .chat(|_: &ChatRequest| Ok("x".to_string()))
            .cache(Cache::in_memory().with_mode(CacheMode::Frozen))
            .build();
        assert!(matches!(gw.chat_complete(&req("q")), Err(GatewayError::CacheMiss { .. })));
        assert_eq!(gw.backend_calls(), 0);
    }

    #[test]
    fn embeddings_are_unit_norm_and_cached() {
        let gw = Gateway::builder()
            .embeddings(|_: &str, input: &EmbedInput| match input {
                EmbedInput::Text(t) => Ok(vec![t.len() as f64, 2.0, 2.0]),
                EmbedInput::Image { .. } => Ok(vec![1.0, 0.0, 0.0]),
            })
            .build();
        let a = gw.embed_text("clip", "x").unwrap();
        let b = gw.embed_text("clip", "x").unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(a, b);
        assert_eq!(gw.backend_calls(), 1);
        assert!(gw.embed_text("clip", "").is_err());
    }

    #[test]
    fn dimension_drift_is_fatal() {
        let gw = Gateway::builder()
            .embeddings(|_: &str, input: &EmbedInput| match input {
                EmbedInput::Text(t) => Ok(vec![1.0; t.len()]),
                EmbedInput::Image { .. } => unreachable!(),
            })
            .build();
        gw.embed_text("clip", "ab").unwrap();
        assert!(matches!(
            gw.embed_text("clip", "abc"),
            Err(GatewayError::DimensionDrift { expected: 2, got: 3, .. })
        ));
    }

    #[test]
    fn expansion_truncates_and_degrades() {
        let long = "y".repeat(800);
        let gw = Gateway::builder()
            .search(move |q: &str| match q {
                "9/11" => Ok(vec!["The September 11 attacks.".to_string()]),
                "long" => Ok(vec![long.clone()]),
                "none" => Ok(vec![]),
                _ => Err(BackendError::Status { status: 503, body: "down".into() }),
            })
            .retry(RetryPolicy::immediate(2))
            .build();
        assert_eq!(gw.expand_tag("9/11"), "The September 11 attacks.");
        assert_eq!(gw.expand_tag("9/11"), "The September 11 attacks.");
        assert_eq!(gw.expand_tag("long").chars().count(), EXPANSION_MAX_CHARS);
        assert_eq!(gw.expand_tag("none"), "");
        assert_eq!(gw.expand_tag("other"), "");
        assert_eq!(gw.warnings().len(), 2);
    }

    #[test]
    fn conceptnet_contract() {
        let gw = Gateway::builder()
            .relatedness(|a: &str, b: &str| match (a, b) {
                ("cat", "dog") => Ok(Some(0.6)),
                _ => Ok(None),
            })
            .build();
        assert_eq!(gw.conceptnet_relatedness("Dog", "Dog").unwrap(), 1.0);
        assert_eq!(gw.conceptnet_relatedness("dog", "cat").unwrap(), 0.6);
        assert_eq!(gw.conceptnet_relatedness("cat", "dog").unwrap(), 0.6);
        assert_eq!(gw.backend_calls(), 1);
        assert_eq!(gw.conceptnet_relatedness("cat", "qwzx").unwrap(), 0.0);
        assert_eq!(gw.warnings().len(), 1);
        assert_eq!(slugify("Sesame  Street"), "sesame_street");
    }

    #[test]
    fn concurrent_identical_requests_coalesce() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let gw = Arc::new(
            Gateway::builder()
                .chat(move |_: &ChatRequest| {
                    c.fetch_add(1, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(20));
                    Ok("toxic".to_string())
                })
                .build(),
        );
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let gw = gw.clone();
                std::thread::spawn(move || gw.chat_complete(&req("same")).unwrap())
            })
            .collect();
        for h in handles {
            assert_eq!(h.join().unwrap(), "toxic");
        }
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
