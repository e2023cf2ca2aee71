use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EnrichedContext, SummaryKind, SummaryRecord, Tagger};
use crate::corpus::{Corpus, Split};
use crate::error::Result;
use crate::jsonl::write_jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTask {
    /// Tagless prompt → ground-truth summary.
    Summary,
    /// Ground-truth summary → ground-truth tag list.
    Tags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneRow {
    pub id: String,
    pub image: PathBuf,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExportReport {
    pub considered: usize,
    pub exported: usize,
    pub skipped_missing_summary: usize,
    pub skipped_no_tags: usize,
}

/// Write fine-tuning pairs for train-split posts to `out`. Posts without a ground-truth
/// summary (or, for the tags task, without tags) are skipped and counted.
pub fn export_finetune_data(
    tagger: &Tagger<'_>,
    corpus: &Corpus,
    task: FinetuneTask,
    summaries: &BTreeMap<String, SummaryRecord>,
    out: &Path,
) -> Result<ExportReport> {
    let mut report = ExportReport::default();
    let mut rows = Vec::new();
    for post in corpus.in_split(Split::Train) {
        report.considered += 1;
        let Some(summary) = summaries
            .get(&post.id)
            .filter(|s| s.kind == SummaryKind::GroundTruth && !s.text.trim().is_empty())
        else {
            report.skipped_missing_summary += 1;
            continue;
        };
        let input = match task {
            FinetuneTask::Summary => {
                let ctx = summary.context.clone().unwrap_or_else(EnrichedContext::default);
                tagger.build_tagless_summary_prompt(corpus, post, &ctx)?.full_text()
            }
            FinetuneTask::Tags => {
                if post.tags.is_empty() {
                    report.skipped_no_tags += 1;
                    continue;
                }
                tagger.build_extraction_prompt(&summary.text, false)?.full_text()
            }
        };
        let target = match task {
            FinetuneTask::Summary => summary.text.clone(),
            FinetuneTask::Tags => post.tags.join(", "),
        };
        rows.push(FinetuneRow {
            id: post.id.clone(),
            image: post.image_path.clone(),
            input,
            target,
        });
    }
    report.exported = rows.len();
    write_jsonl(out, rows)?;
    Ok(report)
}
