use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::corpus::{Corpus, PostRecord};
use crate::error::Result;
use crate::gateway::{EmbeddingVector, Gateway};

use super::tag_set_similarity;

/// Pairwise similarities used to rank exemplars.
pub trait SimilaritySource: Sync {
    fn image_similarity(&self, query: &PostRecord, candidate: &PostRecord) -> Result<f64>;
    fn tag_similarity(&self, query: &[String], candidate: &[String]) -> Result<f64>;
}

/// Similarities from the joint image-text embedding endpoint: image cosine for pictures and
/// mean-of-max tag cosine for tag sets. Embeddings are memoized for the life of the value.
pub struct GatewaySimilarity<'a> {
    gateway: &'a Gateway,
    model: String,
    root: PathBuf,
    images: Mutex<HashMap<String, EmbeddingVector>>,
    tags: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<'a> GatewaySimilarity<'a> {
    pub fn new(gateway: &'a Gateway, model: impl Into<String>, corpus: &Corpus) -> Self {
        Self {
            gateway,
            model: model.into(),
            root: corpus.root.clone(),
            images: Mutex::default(),
            tags: Mutex::default(),
        }
    }

    fn image(&self, post: &PostRecord) -> Result<EmbeddingVector> {
        if let Some(v) = self.images.lock().expect("memo poisoned").get(&post.id) {
            return Ok(v.clone());
        }
        let path = if post.image_path.is_absolute() {
            post.image_path.clone()
        } else {
            self.root.join(&post.image_path)
        };
        let v = self.gateway.embed_image(&self.model, &path)?;
        self.images.lock().expect("memo poisoned").insert(post.id.clone(), v.clone());
        Ok(v)
    }

    fn tag(&self, tag: &str) -> Result<EmbeddingVector> {
        if let Some(v) = self.tags.lock().expect("memo poisoned").get(tag) {
            return Ok(v.clone());
        }
        let v = self.gateway.embed_text(&self.model, tag)?;
        self.tags.lock().expect("memo poisoned").insert(tag.to_string(), v.clone());
        Ok(v)
    }
}

impl SimilaritySource for GatewaySimilarity<'_> {
    fn image_similarity(&self, query: &PostRecord, candidate: &PostRecord) -> Result<f64> {
        Ok(self.image(query)?.cosine(&self.image(candidate)?))
    }

    fn tag_similarity(&self, query: &[String], candidate: &[String]) -> Result<f64> {
        tag_set_similarity(query, candidate, |t| self.tag(t))
    }
}
