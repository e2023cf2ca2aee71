use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::{ConceptNet, OpenAiChat, OpenAiEmbeddings, WebSearch};
use super::stub::{StubBackend, StubSpec};
use super::{Cache, CacheMode, Gateway, GatewayError, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Stub,
}

/// Endpoint configuration. Secrets are never stored here, only the names of the
/// environment variables that hold them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub backend: BackendKind,
    pub stub_file: Option<PathBuf>,
    pub chat_url: Option<String>,
    pub embeddings_url: Option<String>,
    pub search_url: Option<String>,
    pub search_engine_id: Option<String>,
    pub conceptnet_url: Option<String>,
    pub api_key_env: Option<String>,
    pub search_key_env: Option<String>,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub cache_mode: CacheMode,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            stub_file: None,
            chat_url: None,
            embeddings_url: None,
            search_url: None,
            search_engine_id: None,
            conceptnet_url: None,
            api_key_env: None,
            search_key_env: None,
            timeout_secs: 60,
            parallelism: 8,
            max_attempts: 5,
            backoff_ms: 500,
            cache_dir: None,
            cache_mode: CacheMode::ReadWrite,
        }
    }
}

/// Model ids for every role in the pipeline. Fine-tuned models are just different ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelIds {
    /// Writes ground-truth summaries.
    pub teacher: String,
    /// Captions the inpainted image.
    pub caption: String,
    /// Fine-tuned tagless summary generator.
    pub summary: String,
    /// Fine-tuned tag extractor.
    pub extractor: String,
    /// Few-shot classifier.
    pub detector: String,
    /// Joint image-text embedding model.
    pub clip: String,
    /// Sentence embedding model for semantic similarity.
    pub sentence: String,
    /// Contextual token embedding model for token-level F1.
    pub token: String,
}

impl Default for ModelIds {
    fn default() -> Self {
        Self {
            teacher: "gpt-4o".into(),
            caption: "gpt-4o".into(),
            summary: "paligemma2-10b-summary".into(),
            extractor: "paligemma2-10b-tags".into(),
            detector: "gpt-4o".into(),
            clip: "clip-vit-large-patch14".into(),
            sentence: "all-mpnet-base-v2".into(),
            token: "roberta-large".into(),
        }
    }
}

fn env_secret(var: &Option<String>) -> Option<String> {
    var.as_ref().and_then(|v| std::env::var(v).ok())
}

impl Gateway {
    /// Build a gateway from settings. Relative paths resolve against `base_dir`.
    pub fn from_settings(settings: &GatewaySettings, base_dir: &Path) -> Result<Gateway, GatewayError> {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let cache = match &settings.cache_dir {
            Some(dir) => Cache::on_disk(resolve(dir), settings.cache_mode),
            None => Cache::in_memory().with_mode(settings.cache_mode),
        };
        let retry = RetryPolicy {
            max_attempts: settings.max_attempts.max(1),
            base_delay: Duration::from_millis(settings.backoff_ms),
            ..RetryPolicy::default()
        };
        let mut builder = Gateway::builder()
            .cache(cache)
            .retry(retry)
            .parallelism(settings.parallelism);
        let config_err = |e: super::BackendError| GatewayError::InvalidRequest(e.to_string());

        match settings.backend {
            BackendKind::Stub => {
                let spec = match &settings.stub_file {
                    Some(p) => StubSpec::load(&resolve(p)).map_err(config_err)?,
                    None => StubSpec::default(),
                };
                let stub = Arc::new(StubBackend::new(spec));
                builder = builder
                    .chat_arc(stub.clone())
                    .embeddings_arc(stub.clone())
                    .search_arc(stub.clone())
                    .relatedness_arc(stub);
            }
            BackendKind::Http => {
                let timeout = Duration::from_secs(settings.timeout_secs.max(1));
                let key = env_secret(&settings.api_key_env);
                if let Some(url) = &settings.chat_url {
                    builder = builder.chat(OpenAiChat::new(url, key.clone(), timeout).map_err(config_err)?);
                }
                if let Some(url) = &settings.embeddings_url {
                    builder = builder
                        .embeddings(OpenAiEmbeddings::new(url, key.clone(), timeout).map_err(config_err)?);
                }
                if let Some(url) = &settings.search_url {
                    builder = builder.search(
                        WebSearch::new(
                            url,
                            env_secret(&settings.search_key_env),
                            settings.search_engine_id.clone(),
                            timeout,
                        )
                        .map_err(config_err)?,
                    );
                }
                if let Some(url) = &settings.conceptnet_url {
                    builder = builder.relatedness(ConceptNet::new(url, timeout).map_err(config_err)?);
                }
            }
        }
        Ok(builder.build())
    }
}
