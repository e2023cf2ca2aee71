use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use memeguard::corpus::{Corpus, PostRecord, Split};
use memeguard::exemplar::PredictedTags;
use memeguard::jsonl::read_jsonl;
use memeguard::par::par_map;
use memeguard::tagging::{
    clean_lens_context, export_finetune_data, FinetuneTask, SummaryMode, SummaryRecord, Tagger,
};

use super::{record_failures, Failure};
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::{load, save, write_json, write_rows};

#[derive(Debug, Subcommand)]
pub enum TagsCmd {
    /// Clean the raw web-match context of every post.
    CleanLens(CleanLensArgs),
    /// Look up a short web description for every distinct tag.
    Expand(ExpandArgs),
    /// Write teacher summaries that weave in the ground-truth tags.
    GtSummary(GenerateArgs),
    /// Predict tags: tagless summary, then tag extraction.
    Predict(GenerateArgs),
    /// Write fine-tuning pairs for the train split.
    ExportFinetune(ExportArgs),
}

#[derive(Debug, Args)]
pub struct CleanLensArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn admits(self, post: &PostRecord) -> bool {
        match self {
            Self::All => true,
            Self::Train => post.split == Some(Split::Train),
            Self::Test => post.split == Some(Split::Test),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Directory of text-free images, named like the originals.
    #[arg(long)]
    pub inpainted_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Summary,
    Tags,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// summaries.jsonl written by `tags gt-summary`.
    #[arg(long)]
    pub summaries: PathBuf,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// One line of a predicted-tags file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedRow {
    pub post_id: String,
    pub tags: Vec<String>,
}

pub fn read_predicted(path: &Path) -> CliResult<PredictedTags> {
    let rows: Vec<PredictedRow> = read_jsonl(path)?;
    Ok(rows.into_iter().map(|r| (r.post_id, r.tags)).collect())
}

pub fn run(cmd: TagsCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        TagsCmd::CleanLens(a) => clean_lens(a, settings),
        TagsCmd::Expand(a) => expand(a, settings),
        TagsCmd::GtSummary(a) => gt_summary(a, settings),
        TagsCmd::Predict(a) => predict(a, settings),
        TagsCmd::ExportFinetune(a) => export(a, settings),
    }
}

fn clean_lens(a: CleanLensArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let mut run = Run::start(&a.out_dir)?;
    let mut cleaned = 0;
    let records = corpus
        .records
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if let Some(raw) = &p.lens_context_raw {
                p.lens_context_clean = Some(clean_lens_context(raw));
                cleaned += 1;
            }
            p
        })
        .collect();
    save(&corpus.with_records(records), &run.output("manifest.jsonl"))?;
    println!("cleaned web context of {cleaned} post(s)");
    run.finish(settings)?;
    Ok(())
}

fn expand(a: ExpandArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        tag: &'a str,
        expansion: String,
    }
    let corpus = load(&a.corpus, false)?;
    let gateway = settings.gateway()?;
    let mut run = Run::start(&a.out_dir)?;
    let tags: Vec<&str> = corpus
        .records
        .iter()
        .flat_map(|p| p.tags.iter().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let rows = par_map(&tags, gateway.parallelism(), |t| Row {
        tag: t,
        expansion: gateway.expand_tag(t),
    });
    write_rows(&run.output("expansions.jsonl"), &rows)?;
    let warnings = gateway.take_warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    run.note("warnings", warnings.len());
    println!("expanded {} tag(s)", rows.len());
    run.finish(settings)?;
    Ok(())
}

fn tagger<'a>(
    gateway: &'a memeguard::gateway::Gateway,
    settings: &'a Settings,
    templates: &'a memeguard::templates::TemplateSet,
) -> Tagger<'a> {
    Tagger::new(gateway, &settings.models, templates).with_stoplist(settings.stoplist.clone())
}

fn selected(corpus: &Corpus, split: SplitArg) -> Vec<&PostRecord> {
    let mut posts: Vec<&PostRecord> = corpus.records.iter().filter(|p| split.admits(p)).collect();
    posts.sort_by(|a, b| a.id.cmp(&b.id));
    posts
}

fn gt_summary(a: GenerateArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let gateway = settings.gateway()?;
    let templates = settings.templates()?;
    let tagger = tagger(&gateway, settings, &templates);
    let mut run = Run::start(&a.out_dir)?;
    run.template_checksums = templates.checksums();

    let (posts, untagged): (Vec<&PostRecord>, Vec<&PostRecord>) =
        selected(&corpus, a.split).into_iter().partition(|p| !p.tags.is_empty());
    let results = par_map(&posts, gateway.parallelism(), |post| {
        let (ctx, warnings) = tagger.build_context(&corpus, post, a.inpainted_dir.as_deref(), true)?;
        let summary = tagger.generate_summary(&corpus, post, &ctx, SummaryMode::GroundTruth)?;
        Ok::<_, memeguard::Error>((summary, warnings))
    });
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    for (post, r) in posts.iter().zip(results) {
        match r {
            Ok((s, warnings)) => {
                for w in warnings {
                    eprintln!("warning: {}: {w}", post.id);
                }
                summaries.push(s);
            }
            Err(e) => failures.push(Failure {
                post_id: post.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    write_rows(&run.output("summaries.jsonl"), &summaries)?;
    run.note("skipped_untagged", untagged.len());
    println!(
        "{} summar(ies) written; {} untagged post(s) skipped; {} failure(s)",
        summaries.len(),
        untagged.len(),
        failures.len()
    );
    let failed = record_failures(&mut run, &failures)?;
    run.finish(settings)?;
    failed.map_or(Ok(()), Err)
}

fn predict(a: GenerateArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let gateway = settings.gateway()?;
    let templates = settings.templates()?;
    let tagger = tagger(&gateway, settings, &templates);
    let mut run = Run::start(&a.out_dir)?;
    run.template_checksums = templates.checksums();

    let posts = selected(&corpus, a.split);
    let results = par_map(&posts, gateway.parallelism(), |post| {
        tagger.predict_tags(&corpus, post, a.inpainted_dir.as_deref())
    });
    let mut summaries: Vec<SummaryRecord> = Vec::new();
    let mut predicted = Vec::new();
    let mut failures = Vec::new();
    for (post, r) in posts.iter().zip(results) {
        match r {
            Ok((summary, tags)) => {
                summaries.push(summary);
                predicted.push(PredictedRow {
                    post_id: post.id.clone(),
                    tags: tags.into_vec(),
                });
            }
            Err(e) => failures.push(Failure {
                post_id: post.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    write_rows(&run.output("summaries.jsonl"), &summaries)?;
    write_rows(&run.output("predicted_tags.jsonl"), &predicted)?;
    println!("predicted tags for {} post(s); {} failure(s)", predicted.len(), failures.len());
    let failed = record_failures(&mut run, &failures)?;
    run.finish(settings)?;
    failed.map_or(Ok(()), Err)
}

fn export(a: ExportArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let summaries: Vec<SummaryRecord> = read_jsonl(&a.summaries)?;
    let by_id: BTreeMap<String, SummaryRecord> = summaries.into_iter().map(|s| (s.post_id.clone(), s)).collect();
    // the export only renders prompts; no endpoint is contacted
    let gateway = memeguard::gateway::Gateway::builder().build();
    let templates = settings.templates()?;
    let tagger = tagger(&gateway, settings, &templates);
    let (task, name) = match a.task {
        TaskArg::Summary => (FinetuneTask::Summary, "finetune_summary.jsonl"),
        TaskArg::Tags => (FinetuneTask::Tags, "finetune_tags.jsonl"),
    };
    let mut run = Run::start(&a.out_dir)?;
    run.template_checksums = templates.checksums();
    let report = export_finetune_data(&tagger, &corpus, task, &by_id, &run.output(name))?;
    write_json(&run.output("export_report.json"), &report)?;
    if report.exported == 0 {
        run.finish(settings)?;
        return Err(CliError::invalid("no train-split post has a ground-truth summary"));
    }
    println!(
        "exported {} of {} train post(s); {} without summary, {} without tags",
        report.exported, report.considered, report.skipped_missing_summary, report.skipped_no_tags
    );
    run.finish(settings)?;
    Ok(())
}
