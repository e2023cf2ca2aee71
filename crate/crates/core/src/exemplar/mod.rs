//! Few-shot exemplar selection over the training pool.

mod similarity;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{PostRecord, Split};
use crate::error::{Error, Result};
use crate::gateway::EmbeddingVector;
use crate::metrics::mean_of_max;

pub use similarity::{GatewaySimilarity, SimilaritySource};

/// Predicted tags per post id.
pub type PredictedTags = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Image,
    GtTags,
    PredTags,
    ImageGtCombined,
    ImagePredCombined,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        Self::Random,
        Self::Image,
        Self::GtTags,
        Self::PredTags,
        Self::ImageGtCombined,
        Self::ImagePredCombined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Image => "image",
            Self::GtTags => "gt_tags",
            Self::PredTags => "pred_tags",
            Self::ImageGtCombined => "image_gt_combined",
            Self::ImagePredCombined => "image_pred_combined",
        }
    }

    pub fn is_combined(self) -> bool {
        matches!(self, Self::ImageGtCombined | Self::ImagePredCombined)
    }

    pub fn uses_image(self) -> bool {
        matches!(self, Self::Image | Self::ImageGtCombined | Self::ImagePredCombined)
    }

    /// Which tag source the kind scores with, if any.
    pub fn tag_source(self) -> Option<TagSource> {
        match self {
            Self::GtTags | Self::ImageGtCombined => Some(TagSource::GroundTruth),
            Self::PredTags | Self::ImagePredCombined => Some(TagSource::Predicted),
            Self::Random | Self::Image => None,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .or(match norm.as_str() {
                "i_r" => Some(Self::Random),
                "i_im" => Some(Self::Image),
                "i_gt" => Some(Self::GtTags),
                "i_pt" => Some(Self::PredTags),
                "i_im_gt" => Some(Self::ImageGtCombined),
                "i_im_pt" => Some(Self::ImagePredCombined),
                _ => None,
            })
            .ok_or_else(|| Error::invalid(format!("unknown selection strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    GroundTruth,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, k: usize) -> Self {
        Self {
            kind,
            k,
            alpha: None,
            seed: None,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("shot count k must be at least 1"));
        }
        match (self.kind.is_combined(), self.alpha) {
            (true, None) => return Err(Error::invalid(format!("{} needs alpha", self.kind))),
            (false, Some(_)) => return Err(Error::invalid(format!("{} takes no alpha", self.kind))),
            (true, Some(a)) if !(0.0..=1.0).contains(&a) => {
                return Err(Error::invalid(format!("alpha {a} outside [0, 1]")))
            }
            _ => {}
        }
        if self.kind == StrategyKind::Random && self.seed.is_none() {
            return Err(Error::invalid("random selection needs a seed"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag_sim: Option<f64>,
    /// Ranking score (0 for random draws).
    pub combined: f64,
}

/// Mean over query tags of the best cosine against any candidate tag. Empty sets score 0.
pub fn tag_set_similarity<F>(query: &[String], candidate: &[String], mut embed: F) -> Result<f64>
where
    F: FnMut(&str) -> Result<EmbeddingVector>,
{
    if query.is_empty() || candidate.is_empty() {
        return Ok(0.0);
    }
    let q = query.iter().map(|t| embed(t)).collect::<Result<Vec<_>>>()?;
    let c = candidate.iter().map(|t| embed(t)).collect::<Result<Vec<_>>>()?;
    mean_of_max(q.len(), c.len(), |i, j| Ok(q[i].cosine(&c[j])))
}

fn tags_for<'a>(post: &'a PostRecord, source: TagSource, predicted: Option<&'a PredictedTags>) -> Result<&'a [String]> {
    match source {
        TagSource::GroundTruth => Ok(&post.tags),
        TagSource::Predicted => predicted
            .and_then(|p| p.get(&post.id))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::post(&post.id, "no predicted tags available")),
    }
}

/// Seed for one query's random draw, so that each query gets an independent but
/// reproducible sample.
fn query_seed(seed: u64, query_id: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(query_id.as_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Rank candidates by descending score with ties broken by post id.
pub fn rank(mut scored: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    scored.sort_by(|a, b| {
        b.combined
            .partial_cmp(&a.combined)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.post_id.cmp(&b.post_id))
    });
    scored
}

/// Score every eligible candidate. The query itself and test-split posts are never
/// candidates, whatever the caller passed in.
pub fn score_candidates(
    query: &PostRecord,
    pool: &[&PostRecord],
    strategy: &SelectionStrategy,
    sim: &dyn SimilaritySource,
    predicted: Option<&PredictedTags>,
) -> Result<Vec<ScoredCandidate>> {
    strategy.validate()?;
    let eligible: Vec<&PostRecord> = pool
        .iter()
        .copied()
        .filter(|p| p.id != query.id && p.split != Some(Split::Test))
        .collect();
    if eligible.len() < strategy.k {
        return Err(Error::invalid(format!(
            "pool has {} eligible exemplars for query {}, need {}",
            eligible.len(),
            query.id,
            strategy.k
        )));
    }
    if strategy.kind == StrategyKind::Random {
        return Ok(eligible
            .iter()
            .map(|p| ScoredCandidate {
                post_id: p.id.clone(),
                image_sim: None,
                tag_sim: None,
                combined: 0.0,
            })
            .collect());
    }

    let source = strategy.kind.tag_source();
    let query_tags = match source {
        Some(s) => Some(tags_for(query, s, predicted)?),
        None => None,
    };
    if let Some(s) = source {
        let mut any = false;
        for p in &eligible {
            any |= !tags_for(p, s, predicted)?.is_empty();
        }
        if !any {
            return Err(Error::invalid(format!("{} selection over a pool without tags", strategy.kind)));
        }
    }

    let mut out = Vec::with_capacity(eligible.len());
    for p in eligible {
        let image_sim = if strategy.kind.uses_image() {
            Some(sim.image_similarity(query, p)?)
        } else {
            None
        };
        let tag_sim = match (source, query_tags) {
            (Some(s), Some(q)) => Some(sim.tag_similarity(q, tags_for(p, s, predicted)?)?),
            _ => None,
        };
        let combined = match (strategy.alpha, image_sim, tag_sim) {
            (Some(a), Some(i), Some(t)) => a * i + (1.0 - a) * t,
            (None, Some(i), None) => i,
            (None, None, Some(t)) => t,
            _ => unreachable!("validated strategy"),
        };
        out.push(ScoredCandidate {
            post_id: p.id.clone(),
            image_sim,
            tag_sim,
            combined,
        });
    }
    Ok(out)
}

/// Choose `k` exemplars for `query` from `pool`.
///
/// Random selection draws `k` distinct posts (pool ordered by id) from a generator seeded
/// by the strategy seed and the query id; every other kind returns the top-`k` by score.
pub fn select_exemplars(
    query: &PostRecord,
    pool: &[&PostRecord],
    strategy: &SelectionStrategy,
    sim: &dyn SimilaritySource,
    predicted: Option<&PredictedTags>,
) -> Result<Vec<ScoredCandidate>> {
    let mut scored = score_candidates(query, pool, strategy, sim, predicted)?;
    if strategy.kind == StrategyKind::Random {
        scored.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        let seed = strategy.seed.expect("validated strategy");
        let mut rng = ChaCha8Rng::seed_from_u64(query_seed(seed, &query.id));
        let picks = rand::seq::index::sample(&mut rng, scored.len(), strategy.k);
        return Ok(picks.into_iter().map(|i| scored[i].clone()).collect());
    }
    let mut ranked = rank(scored);
    ranked.truncate(strategy.k);
    Ok(ranked)
}

/// The α values searched when tuning: 0.0, 0.1, …, 1.0.
pub fn alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    /// `None` when the objective failed at this α.
    pub macro_f1: Option<f64>,
    pub n_eval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Evaluate `objective` (macro-F1, evaluated-sample count) on every grid point and return
/// the best α with the full table. Ties go to the smaller α.
pub fn tune_alpha<F>(mut objective: F) -> Result<(f64, Vec<AlphaRow>)>
where
    F: FnMut(f64) -> Result<(f64, usize)>,
{
    let mut rows = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for alpha in alpha_grid() {
        match objective(alpha) {
            Ok((score, n)) if score.is_finite() => {
                if best.is_none_or(|(_, s)| score > s) {
                    best = Some((alpha, score));
                }
                rows.push(AlphaRow {
                    alpha,
                    macro_f1: Some(score),
                    n_eval: n,
                    error: None,
                });
            }
            Ok((score, n)) => rows.push(AlphaRow {
                alpha,
                macro_f1: None,
                n_eval: n,
                error: Some(format!("objective returned {score}")),
            }),
            Err(e) => rows.push(AlphaRow {
                alpha,
                macro_f1: None,
                n_eval: 0,
                error: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((alpha, _)) => Ok((alpha, rows)),
        None => Err(Error::invalid("alpha search failed at every grid point")),
    }
}

#[cfg(test)]
mod tests;
