//! Tag generation: enrichment context, ground-truth and tagless summaries, tag
//! extraction and fine-tuning data export.

mod export;
mod lens;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PostRecord};
use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, ModelIds};
use crate::templates::{self, TemplateSet};

pub use export::{export_finetune_data, ExportReport, FinetuneRow, FinetuneTask};
pub use lens::clean_lens_context;

pub const CAPTION_MAX_TOKENS: u32 = 30;
pub const SUMMARY_MAX_TOKENS: u32 = 150;
pub const EXTRACT_MAX_TOKENS: u32 = 64;
pub const MAX_TAGS: usize = 15;
pub const MAX_TAG_CHARS: usize = 80;
/// Placeholder written where a ground-truth tag occurred in a tagless prompt.
pub const TAG_MASK: &str = "___";

/// Normalized tag list: lowercase, trimmed, unique, no stoplist members, each at most
/// [`MAX_TAG_CHARS`] characters, at most [`MAX_TAGS`] entries. Order is preserved.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagSet {
    tags: Vec<String>,
}

impl TagSet {
    pub fn new<S: AsRef<str>>(raw: impl IntoIterator<Item = S>, stoplist: &[String]) -> Self {
        let stop: HashSet<&str> = stoplist.iter().map(String::as_str).collect();
        let mut tags: Vec<String> = Vec::new();
        for t in raw {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() || t.chars().count() > MAX_TAG_CHARS || stop.contains(t.as_str()) || tags.contains(&t) {
                continue;
            }
            tags.push(t);
            if tags.len() == MAX_TAGS {
                break;
            }
        }
        Self { tags }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tags
    }

    pub fn into_vec(self) -> Vec<String> {
        self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Parse a model's tag list answer. `None` when it does not look like a list at all.
pub fn parse_tag_list(raw: &str, stoplist: &[String]) -> Option<TagSet> {
    let raw = raw.trim();
    let body = raw
        .strip_prefix("Tags:")
        .or_else(|| raw.strip_prefix("tags:"))
        .unwrap_or(raw);
    let has_separator = body.contains(',') || body.contains('\n');
    if !has_separator && body.chars().count() > 200 {
        return None;
    }
    let pieces = body.split([',', '\n']).map(|p| {
        let p = p.trim();
        let p = p.trim_start_matches(['-', '*', '•']);
        let p = match p.split_once(". ") {
            Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => rest,
            _ => p,
        };
        p.trim().trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '.' | ';' | ':')).trim()
    });
    let set = TagSet::new(pieces, stoplist);
    (!set.is_empty()).then_some(set)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedContext {
    pub caption: String,
    pub lens_clean: String,
    #[serde(default)]
    pub tag_expansions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    GroundTruth,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryMode {
    GroundTruth,
    Tagless,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub post_id: String,
    pub kind: SummaryKind,
    pub text: String,
    pub model_id: String,
    /// Inputs the summary was written from; reused when exporting fine-tuning data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<EnrichedContext>,
}

/// Ordered, case-insensitive replacement of every tag occurrence with [`TAG_MASK`].
/// Repeats until no tag occurs, since a replacement can splice a new occurrence together.
pub fn mask_tags(text: &str, tags: &[String]) -> String {
    let tags: Vec<&str> = tags.iter().map(|t| t.trim()).filter(|t| !t.is_empty()).collect();
    if tags.is_empty() {
        return text.to_string();
    }
    // Longest first so "twin towers" is masked before "towers".
    let mut sorted = tags.clone();
    sorted.sort_by_key(|t| std::cmp::Reverse(t.chars().count()));
    let alternation = sorted.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
    let re = RegexBuilder::new(&alternation)
        .case_insensitive(true)
        .build()
        .expect("escaped alternation is a valid regex");
    // A tag inside the mask itself would never converge; fall back to deletion.
    let lower_mask = TAG_MASK.to_lowercase();
    let mask = if tags.iter().any(|t| lower_mask.contains(&t.to_lowercase())) { "" } else { TAG_MASK };
    let mut current = text.to_string();
    for _ in 0..10_000 {
        if !re.is_match(&current) {
            return current;
        }
        current = re.replace_all(&current, mask).into_owned();
    }
    re.replace_all(&current, "").into_owned()
}

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() {
        "(none)"
    } else {
        s
    }
}

/// The tag-generation pipeline bound to a gateway, model ids and templates.
pub struct Tagger<'a> {
    pub gateway: &'a Gateway,
    pub models: &'a ModelIds,
    pub templates: &'a TemplateSet,
    pub stoplist: Vec<String>,
}

impl<'a> Tagger<'a> {
    pub fn new(gateway: &'a Gateway, models: &'a ModelIds, templates: &'a TemplateSet) -> Self {
        Self {
            gateway,
            models,
            templates,
            stoplist: Vec::new(),
        }
    }

    pub fn with_stoplist(mut self, stoplist: Vec<String>) -> Self {
        self.stoplist = stoplist;
        self
    }

    /// Caption of the text-free (inpainted) image. A missing inpainted file falls back to
    /// the original image; the returned warning says so.
    pub fn generate_caption(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        inpainted: Option<&Path>,
    ) -> Result<(String, Option<String>)> {
        let original = corpus.resolve_image(post);
        let (image, warning) = match inpainted {
            Some(p) if p.is_file() => (p.to_path_buf(), None),
            Some(p) => {
                let w = format!(
                    "{}: inpainted image {} missing; captioning the original",
                    post.id,
                    p.display()
                );
                tracing::warn!("{w}");
                (original, Some(w))
            }
            None => (original, None),
        };
        let prompt = self.templates.render(templates::CAPTION, &[])?;
        let request = ChatRequest::new(&self.models.caption, CAPTION_MAX_TOKENS)
            .message(ChatMessage::user(prompt).with_image(image));
        let text = self
            .gateway
            .chat_complete(&request)
            .map_err(|e| Error::post(&post.id, e.to_string()))?;
        Ok((text.trim().to_string(), warning))
    }

    /// Caption, cleaned web context and (optionally) tag expansions for one post.
    pub fn build_context(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        inpainted_dir: Option<&Path>,
        with_expansions: bool,
    ) -> Result<(EnrichedContext, Vec<String>)> {
        let inpainted: Option<PathBuf> =
            inpainted_dir.map(|d| d.join(post.image_path.file_name().unwrap_or_default()));
        let (caption, warning) = self.generate_caption(corpus, post, inpainted.as_deref())?;
        let lens_clean = match (&post.lens_context_clean, &post.lens_context_raw) {
            (Some(clean), _) => clean.clone(),
            (None, Some(raw)) => clean_lens_context(raw),
            (None, None) => String::new(),
        };
        let tag_expansions = if with_expansions {
            post.tags.iter().map(|t| (t.clone(), self.gateway.expand_tag(t))).collect()
        } else {
            BTreeMap::new()
        };
        Ok((
            EnrichedContext {
                caption,
                lens_clean,
                tag_expansions,
            },
            warning.into_iter().collect(),
        ))
    }

    pub fn build_groundtruth_summary_prompt(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        ctx: &EnrichedContext,
    ) -> Result<ChatRequest> {
        if post.tags.is_empty() {
            return Err(Error::post(&post.id, "ground-truth summary needs at least one tag"));
        }
        let tags = post.tags.join(", ");
        let expansions = post
            .tags
            .iter()
            .map(|t| {
                let e = ctx.tag_expansions.get(t).map(String::as_str).unwrap_or_default();
                format!("- {t}: {}", or_none(e))
            })
            .collect::<Vec<_>>()
            .join("\n");
        let text = self.templates.render(
            templates::GT_SUMMARY,
            &[
                ("title", or_none(&post.title)),
                ("ocr", or_none(&post.ocr_text)),
                ("caption", or_none(&ctx.caption)),
                ("tags", &tags),
                ("lens", or_none(&ctx.lens_clean)),
                ("expansions", &expansions),
            ],
        )?;
        Ok(ChatRequest::new(&self.models.teacher, SUMMARY_MAX_TOKENS)
            .message(ChatMessage::user(text).with_image(corpus.resolve_image(post))))
    }

    /// Summary prompt with every trace of the ground-truth tags removed: no tag or
    /// expansion sections, and tag strings masked wherever they occur in the text.
    pub fn build_tagless_summary_prompt(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        ctx: &EnrichedContext,
    ) -> Result<ChatRequest> {
        let text = self.templates.render(
            templates::TAGLESS_SUMMARY,
            &[
                ("title", or_none(&post.title)),
                ("ocr", or_none(&post.ocr_text)),
                ("caption", or_none(&ctx.caption)),
                ("lens", or_none(&ctx.lens_clean)),
            ],
        )?;
        let text = mask_tags(&text, &post.tags);
        Ok(ChatRequest::new(&self.models.summary, SUMMARY_MAX_TOKENS)
            .message(ChatMessage::user(text).with_image(corpus.resolve_image(post))))
    }

    pub fn generate_summary(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        ctx: &EnrichedContext,
        mode: SummaryMode,
    ) -> Result<SummaryRecord> {
        let (request, kind) = match mode {
            SummaryMode::GroundTruth => (
                self.build_groundtruth_summary_prompt(corpus, post, ctx)?,
                SummaryKind::GroundTruth,
            ),
            SummaryMode::Tagless => (self.build_tagless_summary_prompt(corpus, post, ctx)?, SummaryKind::Generated),
        };
        let text = self
            .gateway
            .chat_complete(&request)
            .map_err(|e| Error::post(&post.id, e.to_string()))?;
        let text = text.trim().to_string();
        Ok(SummaryRecord {
            post_id: post.id.clone(),
            kind,
            text,
            model_id: request.model_id,
            context: Some(ctx.clone()),
        })
    }

    pub fn build_extraction_prompt(&self, summary: &str, strict: bool) -> Result<ChatRequest> {
        let name = if strict { templates::EXTRACT_TAGS_STRICT } else { templates::EXTRACT_TAGS };
        let text = self.templates.render(name, &[("summary", summary)])?;
        Ok(ChatRequest::new(&self.models.extractor, EXTRACT_MAX_TOKENS).message(ChatMessage::user(text)))
    }

    /// Ask the extractor for a tag list; one stricter retry if the answer is not a list.
    pub fn extract_tags(&self, summary: &SummaryRecord) -> Result<TagSet> {
        if summary.text.trim().is_empty() {
            return Err(Error::post(&summary.post_id, "cannot extract tags from an empty summary"));
        }
        let mut last = String::new();
        for strict in [false, true] {
            let request = self.build_extraction_prompt(&summary.text, strict)?;
            let raw = match self.gateway.chat_complete(&request) {
                Ok(raw) => raw,
                Err(e) if e.is_external() || strict => return Err(Error::post(&summary.post_id, e.to_string())),
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            if let Some(tags) = parse_tag_list(&raw, &self.stoplist) {
                return Ok(tags);
            }
            last = raw;
        }
        Err(Error::post(
            &summary.post_id,
            format!("tag extractor gave no usable list after a retry: {last:?}"),
        ))
    }

    /// Tagless summary followed by tag extraction. Returns both so the summary can be stored.
    pub fn predict_tags(
        &self,
        corpus: &Corpus,
        post: &PostRecord,
        inpainted_dir: Option<&Path>,
    ) -> Result<(SummaryRecord, TagSet)> {
        let (ctx, _) = self.build_context(corpus, post, inpainted_dir, false)?;
        let summary = self.generate_summary(corpus, post, &ctx, SummaryMode::Tagless)?;
        let tags = self.extract_tags(&summary)?;
        Ok((summary, tags))
    }
}
