//! Content-addressed request/response store.
//!
//! Layout: `<dir>/<endpoint kind>/<sha256 of canonical request>.json`, each file holding the
//! request and its response side by side.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Chat,
    EmbedText,
    EmbedImage,
    Search,
    Conceptnet,
}

impl EndpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::Chat => "chat",
            EndpointKind::EmbedText => "embed_text",
            EndpointKind::EmbedImage => "embed_image",
            EndpointKind::Search => "search",
            EndpointKind::Conceptnet => "conceptnet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub kind: EndpointKind,
    pub digest: String,
}

impl CacheKey {
    /// `request` must already be canonical: serde_json maps serialize with sorted keys, so
    /// two semantically identical requests built through the gateway produce the same bytes.
    pub fn new(kind: EndpointKind, request: &Value) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(kind.as_str().as_bytes());
        hasher.update(b"\n");
        hasher.update(request.to_string().as_bytes());
        Self {
            kind,
            digest: hex::encode(hasher.finalize()),
        }
    }

    fn id(&self) -> String {
        format!("{}/{}", self.kind.as_str(), self.digest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub kind: EndpointKind,
    pub request: Value,
    pub response: Value,
    /// Wall-clock time of the original call; replays report this value.
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits, record misses.
    #[default]
    ReadWrite,
    /// Serve hits; a miss is an error. Makes runs offline-replayable.
    Frozen,
    Off,
}

#[derive(Debug, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
    mode: CacheMode,
    mem: RwLock<HashMap<String, CacheEntry>>,
}

impl Cache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>, mode: CacheMode) -> Self {
        Self {
            dir: Some(dir.into()),
            mode,
            mem: RwLock::default(),
        }
    }

    pub fn with_mode(mut self, mode: CacheMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(key.kind.as_str()).join(format!("{}.json", key.digest)))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, GatewayError> {
        if self.mode == CacheMode::Off {
            return Ok(None);
        }
        let id = key.id();
        if let Some(hit) = self.mem.read().expect("cache lock poisoned").get(&id) {
            return Ok(Some(hit.clone()));
        }
        let Some(path) = self.path(key) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => {
                let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| {
                    GatewayError::Cache(format!("corrupt cache file {}: {e}", path.display()))
                })?;
                self.mem
                    .write()
                    .expect("cache lock poisoned")
                    .insert(id, entry.clone());
                Ok(Some(entry))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    pub fn put(&self, key: &CacheKey, entry: CacheEntry) -> Result<(), GatewayError> {
        match self.mode {
            CacheMode::Off | CacheMode::Frozen => return Ok(()),
            CacheMode::ReadWrite => {}
        }
        if let Some(path) = self.path(key) {
            let parent = path.parent().expect("cache path has a parent");
            fs::create_dir_all(parent)
                .map_err(|e| GatewayError::Cache(format!("{}: {e}", parent.display())))?;
            let tmp = path.with_extension(format!("tmp{}", std::process::id()));
            let bytes = serde_json::to_vec_pretty(&entry)
                .map_err(|e| GatewayError::Cache(e.to_string()))?;
            fs::write(&tmp, bytes)
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        }
        self.mem
            .write()
            .expect("cache lock poisoned")
            .insert(key.id(), entry);
        Ok(())
    }

    pub fn len_in_memory(&self) -> usize {
        self.mem.read().expect("cache lock poisoned").len()
    }
}
