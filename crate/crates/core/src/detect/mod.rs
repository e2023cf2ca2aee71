//! Few-shot classification harness for stage I, stage II and hateful/not-hateful runs.

mod parse;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PostRecord, Split};
use crate::error::{Error, Result};
use crate::exemplar::{self, AlphaRow, PredictedTags, SelectionStrategy, SimilaritySource, TagSource};
use crate::gateway::{sha256_hex, ChatMessage, ChatRequest, Gateway};
use crate::jsonl::read_jsonl;
use crate::labels::{LabelSpace, Stage1Label, Stage2Label};
use crate::metrics::{macro_f1, MetricReport};
use crate::par::par_map;
use crate::templates::{self, TemplateSet};

pub use parse::parse_label;

pub const DETECT_MAX_TOKENS: u32 = 30;
/// Stand-in prediction for answers that could not be mapped to a label.
pub const UNPARSED: &str = "<unparsed>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparsedPolicy {
    /// Unusable answers count as wrong predictions.
    #[default]
    Strict,
    /// Unusable answers are left out of the score.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTags {
    None,
    GroundTruth,
    Predicted,
}

impl PromptTags {
    /// Tags shown in the prompt follow the tags the strategy ranks with.
    pub fn for_strategy(strategy: &SelectionStrategy) -> Self {
        match strategy.kind.tag_source() {
            Some(TagSource::GroundTruth) => Self::GroundTruth,
            Some(TagSource::Predicted) => Self::Predicted,
            None => Self::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub label_space: LabelSpace,
    pub strategy: SelectionStrategy,
    pub model_id: String,
    pub prompt_tags: PromptTags,
    #[serde(default)]
    pub policy: UnparsedPolicy,
    /// Share of failed samples above which the run is marked invalid.
    pub max_failure_rate: f64,
}

impl DetectionConfig {
    pub fn new(label_space: LabelSpace, strategy: SelectionStrategy, model_id: impl Into<String>) -> Self {
        Self {
            label_space,
            prompt_tags: PromptTags::for_strategy(&strategy),
            strategy,
            model_id: model_id.into(),
            policy: UnparsedPolicy::Strict,
            max_failure_rate: 0.10,
        }
    }

    /// sha256 over the configuration and the effective template texts.
    pub fn digest(&self, templates: &TemplateSet) -> String {
        let canonical = serde_json::json!({ "config": self, "templates": templates.checksums() });
        sha256_hex(canonical.to_string().as_bytes())
    }
}

/// Gold label of `post` in `space`, if it has one there.
///
/// Stage II only knows toxic posts with a decided label; the hateful/not-hateful space
/// reads hateful as stage I toxic + stage II hateful and not-hateful as stage I normal.
pub fn gold_label(space: &LabelSpace, post: &PostRecord) -> Option<String> {
    let label = match space.id.as_str() {
        "stage1" => post.stage1_label.map(|l| l.as_str().to_string()),
        "stage2" => match (post.stage1_label, post.stage2_label) {
            (Some(Stage1Label::Toxic), Some(l)) if post.is_stage2_decided() => Some(l.as_str().to_string()),
            _ => None,
        },
        "fhm" => match (post.stage1_label, post.stage2_label) {
            (Some(Stage1Label::Normal), _) => Some("not-hateful".to_string()),
            (Some(Stage1Label::Toxic), Some(Stage2Label::Hateful)) => Some("hateful".to_string()),
            _ => None,
        },
        _ => None,
    }?;
    space.contains(&label).then_some(label)
}

/// One exemplar or the query as shown to the model.
#[derive(Debug, Clone, Copy)]
pub struct Shot<'a> {
    pub post: &'a PostRecord,
    pub tags: Option<&'a [String]>,
    pub label: Option<&'a str>,
}

fn options_phrase(labels: &[String]) -> String {
    match labels {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    }
}

fn shot_text(templates: &TemplateSet, shot: &Shot<'_>) -> Result<String> {
    let tags = match shot.tags {
        Some(t) if !t.is_empty() => t.join(", "),
        Some(_) => "(none)".to_string(),
        None => "(not provided)".to_string(),
    };
    let or_none = |s: &str| if s.trim().is_empty() { "(none)".to_string() } else { s.to_string() };
    templates.render(
        templates::DETECT_QUERY,
        &[("title", &or_none(&shot.post.title)), ("ocr", &or_none(&shot.post.ocr_text)), ("tags", &tags)],
    )
}

/// Few-shot classification prompt: definitions and answer options, one user/assistant turn
/// per exemplar, then the unlabeled query as the final user turn.
pub fn build_prompt(
    templates: &TemplateSet,
    space: &LabelSpace,
    model_id: &str,
    corpus: &Corpus,
    query: &Shot<'_>,
    exemplars: &[Shot<'_>],
    strict: bool,
) -> Result<ChatRequest> {
    let definitions = space
        .definitions
        .iter()
        .map(|(l, d)| format!("- {l}: {d}"))
        .collect::<Vec<_>>()
        .join("\n");
    let options = options_phrase(&space.labels);
    let mut system = templates.render(
        templates::DETECT_SYSTEM,
        &[("definitions", &definitions), ("options", &options)],
    )?;
    if strict {
        system.push('\n');
        system.push_str(&templates.render(templates::DETECT_STRICT, &[("options", &options)])?);
    }
    let mut request = ChatRequest::new(model_id, DETECT_MAX_TOKENS).message(ChatMessage::system(system));
    for ex in exemplars {
        let label = ex
            .label
            .ok_or_else(|| Error::post(&ex.post.id, "exemplar has no gold label"))?;
        request = request
            .message(ChatMessage::user(shot_text(templates, ex)?).with_image(corpus.resolve_image(ex.post)))
            .message(ChatMessage::assistant(label));
    }
    Ok(request.message(ChatMessage::user(shot_text(templates, query)?).with_image(corpus.resolve_image(query.post))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    Ok,
    Unparsed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub post_id: String,
    pub gold: String,
    #[serde(default)]
    pub predicted: Option<String>,
    #[serde(default)]
    pub raw: String,
    #[serde(default)]
    pub exemplar_ids: Vec<String>,
    /// Latency of the answering call(s) as recorded when the response was first fetched.
    #[serde(default)]
    pub latency_ms: u64,
    pub status: PredictionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeader {
    pub config: DetectionConfig,
    pub config_digest: String,
    pub template_checksums: BTreeMap<String, String>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub n_queries: usize,
    pub pool_size: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: PredictionHeader,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub header: PredictionHeader,
    pub records: Vec<PredictionRecord>,
    pub report: MetricReport,
    pub invalid: bool,
}

impl BenchmarkOutcome {
    pub fn write_predictions(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(&HeaderLine {
            header: self.header.clone(),
        })?;
        text.push('\n');
        for r in &self.records {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.report)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Read a prediction file written by [`BenchmarkOutcome::write_predictions`].
pub fn read_predictions(path: &Path) -> Result<(PredictionHeader, Vec<PredictionRecord>)> {
    let mut lines: Vec<serde_json::Value> = read_jsonl(path)?;
    if lines.is_empty() {
        return Err(Error::invalid(format!("{}: empty prediction file", path.display())));
    }
    let header: HeaderLine = serde_json::from_value(lines.remove(0))?;
    let records = lines
        .into_iter()
        .map(serde_json::from_value)
        .collect::<std::result::Result<Vec<PredictionRecord>, _>>()?;
    Ok((header.header, records))
}

/// Score prediction records; the same function backs the harness and offline re-scoring.
pub fn score_records(config: &DetectionConfig, records: &[PredictionRecord], digest: &str) -> Result<(MetricReport, bool)> {
    let failures = records.iter().filter(|r| r.status != PredictionStatus::Ok).count();
    let pairs: Vec<(&str, &str)> = records
        .iter()
        .filter_map(|r| match (&r.predicted, config.policy) {
            (Some(p), _) if r.status == PredictionStatus::Ok => Some((r.gold.as_str(), p.as_str())),
            (_, UnparsedPolicy::Strict) => Some((r.gold.as_str(), UNPARSED)),
            (_, UnparsedPolicy::Drop) => None,
        })
        .collect();
    let labels: Vec<&str> = config.label_space.labels.iter().map(String::as_str).collect();
    let mut report = if pairs.is_empty() {
        let mut r = MetricReport::default();
        r.warnings.push("no scorable predictions".into());
        r
    } else {
        macro_f1(&pairs, &labels)?
    };
    let rate = if records.is_empty() { 0.0 } else { failures as f64 / records.len() as f64 };
    let invalid = records.is_empty() || pairs.is_empty() || rate > config.max_failure_rate;
    report.metrics.insert("failures".into(), failures as f64);
    report.metrics.insert("failure_rate".into(), rate);
    report.metrics.insert("invalid".into(), if invalid { 1.0 } else { 0.0 });
    report.config_digest = Some(digest.to_string());
    if invalid {
        report
            .warnings
            .push(format!("run invalid: {failures} of {} samples failed", records.len()));
    }
    Ok((report, invalid))
}

/// Everything a benchmark run needs besides its configuration.
pub struct Harness<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub corpus: &'a Corpus,
    pub similarity: &'a dyn SimilaritySource,
    pub predicted: Option<&'a PredictedTags>,
}

impl<'a> Harness<'a> {
    /// Test-split posts with a gold label in `space`, ordered by id.
    pub fn eligible_queries(&self, space: &LabelSpace) -> Vec<&'a PostRecord> {
        let mut v: Vec<&PostRecord> = self
            .corpus
            .in_split(Split::Test)
            .filter(|p| gold_label(space, p).is_some())
            .collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    /// Train-split posts with a gold label in `space`, ordered by id.
    pub fn exemplar_pool(&self, space: &LabelSpace) -> Vec<&'a PostRecord> {
        let mut v: Vec<&PostRecord> = self
            .corpus
            .in_split(Split::Train)
            .filter(|p| gold_label(space, p).is_some())
            .collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    fn prompt_tags(&self, config: &DetectionConfig, post: &'a PostRecord) -> Option<&'a [String]> {
        match config.prompt_tags {
            PromptTags::None => None,
            PromptTags::GroundTruth => Some(&post.tags),
            PromptTags::Predicted => Some(
                self.predicted
                    .and_then(|p| p.get(&post.id))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]),
            ),
        }
    }

    fn classify(&self, config: &DetectionConfig, query: &'a PostRecord, pool: &[&'a PostRecord]) -> PredictionRecord {
        let gold = gold_label(&config.label_space, query).unwrap_or_default();
        let mut record = PredictionRecord {
            post_id: query.id.clone(),
            gold,
            predicted: None,
            raw: String::new(),
            exemplar_ids: Vec::new(),
            latency_ms: 0,
            status: PredictionStatus::Failed,
            error: None,
        };
        let chosen = match exemplar::select_exemplars(query, pool, &config.strategy, self.similarity, self.predicted) {
            Ok(c) => c,
            Err(e) => {
                record.error = Some(e.to_string());
                return record;
            }
        };
        record.exemplar_ids = chosen.iter().map(|c| c.post_id.clone()).collect();
        if record.exemplar_ids.contains(&query.id) {
            record.error = Some("query selected as its own exemplar".into());
            return record;
        }
        let by_id: BTreeMap<&str, &PostRecord> = pool.iter().map(|p| (p.id.as_str(), *p)).collect();
        let labels: Vec<Option<String>> = record
            .exemplar_ids
            .iter()
            .map(|id| gold_label(&config.label_space, by_id[id.as_str()]))
            .collect();
        let shots: Vec<Shot<'_>> = record
            .exemplar_ids
            .iter()
            .zip(&labels)
            .map(|(id, label)| {
                let post = by_id[id.as_str()];
                Shot {
                    post,
                    tags: self.prompt_tags(config, post),
                    label: label.as_deref(),
                }
            })
            .collect();
        let query_shot = Shot {
            post: query,
            tags: self.prompt_tags(config, query),
            label: None,
        };

        for strict in [false, true] {
            let request = match build_prompt(
                self.templates,
                &config.label_space,
                &config.model_id,
                self.corpus,
                &query_shot,
                &shots,
                strict,
            ) {
                Ok(r) => r,
                Err(e) => {
                    record.error = Some(e.to_string());
                    return record;
                }
            };
            match self.gateway.chat_complete_detailed(&request) {
                Ok(c) => {
                    record.latency_ms += c.latency_ms;
                    record.raw = c.text;
                    if let Some(label) = parse_label(&record.raw, &config.label_space) {
                        record.predicted = Some(label);
                        record.status = PredictionStatus::Ok;
                        record.error = None;
                        return record;
                    }
                    record.status = PredictionStatus::Unparsed;
                    record.error = Some("answer names no single label".into());
                }
                Err(e) => {
                    record.status = PredictionStatus::Failed;
                    record.error = Some(e.to_string());
                    return record;
                }
            }
        }
        record
    }

    /// Classify `queries` with exemplars drawn from `pool` and score the result.
    pub fn run(
        &self,
        config: &DetectionConfig,
        queries: &[&'a PostRecord],
        pool: &[&'a PostRecord],
    ) -> Result<BenchmarkOutcome> {
        config.strategy.validate()?;
        let missing: Vec<&str> = queries
            .iter()
            .filter(|q| gold_label(&config.label_space, q).is_none())
            .map(|q| q.id.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!(
                "queries without a {} gold label: {}",
                config.label_space.id,
                missing.join(", ")
            )));
        }
        let mut records = par_map(queries, self.gateway.parallelism(), |q| self.classify(config, q, pool));
        records.sort_by(|a, b| a.post_id.cmp(&b.post_id));

        let digest = config.digest(self.templates);
        let (report, invalid) = score_records(config, &records, &digest)?;
        let header = PredictionHeader {
            config: config.clone(),
            config_digest: digest,
            template_checksums: self.templates.checksums(),
            alpha: config.strategy.alpha,
            seed: config.strategy.seed,
            n_queries: queries.len(),
            pool_size: pool.len(),
        };
        Ok(BenchmarkOutcome {
            header,
            records,
            report,
            invalid,
        })
    }

    /// Full benchmark: every eligible test post, exemplars from the labeled train split.
    pub fn run_benchmark(&self, config: &DetectionConfig) -> Result<BenchmarkOutcome> {
        let queries = self.eligible_queries(&config.label_space);
        let pool = self.exemplar_pool(&config.label_space);
        self.run(config, &queries, &pool)
    }

    /// Grid-search α for a combined strategy on `validation`, which must not overlap `pool`.
    pub fn tune_alpha(
        &self,
        base: &DetectionConfig,
        validation: &[&'a PostRecord],
        pool: &[&'a PostRecord],
    ) -> Result<(f64, Vec<AlphaRow>)> {
        if !base.strategy.kind.is_combined() {
            return Err(Error::invalid(format!("{} has no alpha to tune", base.strategy.kind)));
        }
        if let Some(p) = validation.iter().find(|v| pool.iter().any(|p| p.id == v.id)) {
            return Err(Error::invalid(format!("validation post {} is also in the pool", p.id)));
        }
        exemplar::tune_alpha(|alpha| {
            let mut config = base.clone();
            config.strategy.alpha = Some(alpha);
            let outcome = self.run(&config, validation, pool)?;
            if outcome.invalid {
                return Err(Error::invalid(format!("run at alpha {alpha} is invalid")));
            }
            Ok((outcome.report.macro_f1(), outcome.records.len()))
        })
    }
}

