use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::text::tokenize;
use crate::error::{Error, Result};
use crate::gateway::{EmbeddingVector, Gateway};
use crate::par::par_map;

/// For each query item take the best similarity over candidate items, then average.
/// Empty inputs score 0.
pub fn mean_of_max<F>(n_query: usize, n_cand: usize, mut sim: F) -> Result<f64>
where
    F: FnMut(usize, usize) -> Result<f64>,
{
    if n_query == 0 || n_cand == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n_query {
        let mut best = f64::NEG_INFINITY;
        for j in 0..n_cand {
            best = best.max(sim(i, j)?);
        }
        total += best;
    }
    Ok(total / n_query as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSimMethod {
    /// Cosine of sentence embeddings.
    Semantic,
    /// BERTScore-style F1 of greedy token matches.
    TokenF1,
    /// ConceptNet relatedness between the two terms.
    Conceptnet,
}

impl fmt::Display for TagSimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Semantic => "semantic",
            Self::TokenF1 => "token_f1",
            Self::Conceptnet => "conceptnet",
        })
    }
}

impl FromStr for TagSimMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "semantic" | "sbert" => Ok(Self::Semantic),
            "token_f1" | "token-f1" | "bertscore" | "bs" => Ok(Self::TokenF1),
            "conceptnet" => Ok(Self::Conceptnet),
            other => Err(Error::invalid(format!("unknown tag similarity method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSimReport {
    pub method: TagSimMethod,
    pub expanded: bool,
    /// Per-post mean-of-max score, 0–100 scale.
    pub per_post: BTreeMap<String, f64>,
    /// Mean of the per-post scores, 0–100 scale.
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Pairwise tag similarity backed by the gateway. Embeddings are memoized per scorer.
pub struct TagScorer<'a> {
    gateway: &'a Gateway,
    sentence_model: String,
    token_model: String,
    memo: Mutex<HashMap<(String, String), EmbeddingVector>>,
}

impl<'a> TagScorer<'a> {
    pub fn new(gateway: &'a Gateway, sentence_model: impl Into<String>, token_model: impl Into<String>) -> Self {
        Self {
            gateway,
            sentence_model: sentence_model.into(),
            token_model: token_model.into(),
            memo: Mutex::default(),
        }
    }

    fn embed(&self, model: &str, text: &str) -> Result<EmbeddingVector> {
        let key = (model.to_string(), text.to_string());
        if let Some(v) = self.memo.lock().expect("memo poisoned").get(&key) {
            return Ok(v.clone());
        }
        let v = self.gateway.embed_text(model, text)?;
        self.memo.lock().expect("memo poisoned").insert(key, v.clone());
        Ok(v)
    }

    /// Expansion text of a tag, falling back to the tag itself when the search came back empty.
    fn expanded_text(&self, tag: &str) -> String {
        let e = self.gateway.expand_tag(tag);
        if e.trim().is_empty() {
            tag.to_string()
        } else {
            e
        }
    }

    fn token_f1(&self, a: &str, b: &str) -> Result<f64> {
        let embed_all = |text: &str| -> Result<Vec<EmbeddingVector>> {
            tokenize(text).iter().map(|t| self.embed(&self.token_model, t)).collect()
        };
        let (ea, eb) = (embed_all(a)?, embed_all(b)?);
        if ea.is_empty() || eb.is_empty() {
            return Ok(0.0);
        }
        let recall = mean_of_max(ea.len(), eb.len(), |i, j| Ok(ea[i].cosine(&eb[j])))?;
        let precision = mean_of_max(eb.len(), ea.len(), |i, j| Ok(eb[i].cosine(&ea[j])))?;
        Ok(if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        })
    }

    /// Similarity of two tag texts under `method`.
    pub fn pair(&self, method: TagSimMethod, a: &str, b: &str) -> Result<f64> {
        match method {
            TagSimMethod::Semantic => {
                Ok(self.embed(&self.sentence_model, a)?.cosine(&self.embed(&self.sentence_model, b)?))
            }
            TagSimMethod::TokenF1 => self.token_f1(a, b),
            TagSimMethod::Conceptnet => Ok(self.gateway.conceptnet_relatedness(a, b)?),
        }
    }

    /// Mean over ground-truth tags of the best match among generated tags, in [-1, 1].
    /// An empty generated set scores 0 and yields a warning.
    pub fn score(
        &self,
        gt: &[String],
        generated: &[String],
        method: TagSimMethod,
        expanded: bool,
    ) -> Result<(f64, Option<String>)> {
        if expanded && method == TagSimMethod::Conceptnet {
            return Err(Error::invalid("conceptnet relatedness is only defined on plain tags"));
        }
        if gt.is_empty() {
            return Err(Error::invalid("tag similarity needs at least one ground-truth tag"));
        }
        if generated.is_empty() {
            return Ok((0.0, Some("generated tag set is empty; scored 0".into())));
        }
        let texts = |tags: &[String]| -> Vec<String> {
            if expanded {
                tags.iter().map(|t| self.expanded_text(t)).collect()
            } else {
                tags.to_vec()
            }
        };
        let (g, p) = (texts(gt), texts(generated));
        let s = mean_of_max(g.len(), p.len(), |i, j| self.pair(method, &g[i], &p[j]))?;
        Ok((s, None))
    }

    /// Corpus-level report over `(post id, ground truth, generated)` triples. Posts without
    /// ground-truth tags are skipped with a warning.
    pub fn report(
        &self,
        items: &[(String, Vec<String>, Vec<String>)],
        method: TagSimMethod,
        expanded: bool,
    ) -> Result<TagSimReport> {
        if expanded && method == TagSimMethod::Conceptnet {
            return Err(Error::invalid("conceptnet relatedness is only defined on plain tags"));
        }
        type Scored = Result<(String, Option<f64>, Option<String>)>;
        let scored = par_map(items, self.gateway.parallelism(), |(id, gt, generated)| -> Scored {
            if gt.is_empty() {
                return Ok((id.clone(), None, Some(format!("{id}: no ground-truth tags; skipped"))));
            }
            let (s, w) = self
                .score(gt, generated, method, expanded)
                .map_err(|e| Error::post(id.clone(), e.to_string()))?;
            Ok((id.clone(), Some(s), w.map(|w| format!("{id}: {w}"))))
        });
        let mut report = TagSimReport {
            method,
            expanded,
            per_post: BTreeMap::new(),
            mean: 0.0,
            warnings: Vec::new(),
        };
        for r in scored {
            let (id, score, warning) = r?;
            if let Some(s) = score {
                report.per_post.insert(id, 100.0 * s);
            }
            report.warnings.extend(warning);
        }
        if !report.per_post.is_empty() {
            report.mean = report.per_post.values().sum::<f64>() / report.per_post.len() as f64;
        }
        Ok(report)
    }
}

/// One-shot convenience wrapper around [`TagScorer::score`].
pub fn tag_similarity(
    gateway: &Gateway,
    sentence_model: &str,
    token_model: &str,
    gt: &[String],
    generated: &[String],
    method: TagSimMethod,
    expanded: bool,
) -> Result<f64> {
    TagScorer::new(gateway, sentence_model, token_model)
        .score(gt, generated, method, expanded)
        .map(|(s, _)| s)
}
