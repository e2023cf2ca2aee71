use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde::Serialize;

use memeguard::corpus::{
    clean_tags, corpus_stats, dedup_exact, dedup_perceptual, filter_min_comments, load_corpus, split_train_test,
    SplitConfig,
};

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::{load, save, write_json};
use crate::Format;

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Validate a raw manifest and write the cleaned corpus.
    Ingest(IngestArgs),
    /// Drop exact and visual duplicates.
    Dedup(DedupArgs),
    /// Assign train/test splits with per-tag test coverage.
    Split(SplitArgs),
    /// Label counts per split.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Manifest file, or a directory containing manifest.jsonl.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Keep only posts with at least this many comments.
    #[arg(long, default_value_t = 0)]
    pub min_comments: u32,
    /// Lowercase tags and remove stoplist entries (from the config file).
    #[arg(long)]
    pub clean_tags: bool,
    /// Fail instead of skipping malformed lines.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Maximum Hamming distance between image hashes that still counts as a duplicate.
    #[arg(long, default_value_t = 0)]
    pub threshold: u32,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub test_size: usize,
    /// Minimum share of every frequent tag's posts that lands in test.
    #[arg(long, default_value_t = 0.15)]
    pub coverage: f64,
    /// Tags rarer than this carry no coverage constraint.
    #[arg(long, default_value_t = 4)]
    pub min_tag_occurrences: usize,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Also write stats.json (and a run manifest) here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(cmd: CorpusCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        CorpusCmd::Ingest(a) => ingest(a, settings),
        CorpusCmd::Dedup(a) => dedup(a, settings),
        CorpusCmd::Split(a) => split(a, settings),
        CorpusCmd::Stats(a) => stats(a, settings),
    }
}

fn ingest(a: IngestArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        loaded: usize,
        kept: usize,
        below_min_comments: usize,
        skipped_lines: &'a [memeguard::corpus::LineError],
        missing_images: &'a [String],
    }
    let report = load_corpus(&a.manifest)?;
    if a.strict && !report.errors.is_empty() {
        let first = &report.errors[0];
        return Err(CliError::invalid(format!(
            "{} malformed line(s); first at line {}: {}",
            report.errors.len(),
            first.line,
            first.message
        )));
    }
    for e in &report.errors {
        eprintln!("warning: line {}: {}", e.line, e.message);
    }
    let mut run = Run::start(&a.out_dir)?;
    let mut corpus = filter_min_comments(&report.corpus, a.min_comments);
    let below = report.corpus.len() - corpus.len();
    if a.clean_tags {
        corpus = clean_tags(&corpus, &settings.stoplist);
    }
    save(&corpus, &run.output("manifest.jsonl"))?;
    write_json(
        &run.output("ingest_report.json"),
        &Report {
            loaded: report.corpus.len(),
            kept: corpus.len(),
            below_min_comments: below,
            skipped_lines: &report.errors,
            missing_images: &report.missing_images,
        },
    )?;
    println!(
        "ingested {} record(s); {} skipped line(s), {} missing image(s)",
        corpus.len(),
        report.errors.len(),
        report.missing_images.len()
    );
    run.finish(settings)?;
    Ok(())
}

fn dedup(a: DedupArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        threshold: u32,
        candidate_groups: &'a [memeguard::corpus::DuplicateGroup],
        dropped: &'a [(String, String)],
        unreadable: &'a [String],
        kept: usize,
    }
    let corpus = load(&a.corpus, false)?;
    let mut run = Run::start(&a.out_dir)?;
    let groups = dedup_exact(&corpus);
    let outcome = dedup_perceptual(&corpus, &groups, a.threshold);
    for id in &outcome.unreadable {
        eprintln!("warning: {id}: image could not be hashed; kept");
    }
    save(&outcome.corpus, &run.output("manifest.jsonl"))?;
    write_json(
        &run.output("dedup_report.json"),
        &Report {
            threshold: a.threshold,
            candidate_groups: &groups,
            dropped: &outcome.dropped,
            unreadable: &outcome.unreadable,
            kept: outcome.corpus.len(),
        },
    )?;
    println!(
        "{} candidate group(s); dropped {}, kept {}",
        groups.len(),
        outcome.dropped.len(),
        outcome.corpus.len()
    );
    run.finish(settings)?;
    Ok(())
}

fn split(a: SplitArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let config = SplitConfig {
        test_size: a.test_size,
        coverage: a.coverage,
        seed: settings.seed,
        min_tag_occurrences: a.min_tag_occurrences,
    };
    let mut run = Run::start(&a.out_dir)?;
    run.seeds.insert("split".into(), settings.seed);
    let out = split_train_test(&corpus, &config)?;
    save(&out, &run.output("manifest.jsonl"))?;
    let stats = corpus_stats(&out);
    println!("train {} / test {}", stats.total.train, stats.total.test);
    run.finish(settings)?;
    Ok(())
}

fn stats(a: StatsArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        stage: &'a str,
        label: &'a str,
        train: usize,
        test: usize,
        unsplit: usize,
        total: usize,
    }
    let corpus = load(&a.corpus, false)?;
    let stats = corpus_stats(&corpus);
    match a.format {
        Format::Table => print!("{}", stats.render_table()),
        Format::Records => {
            for (stage, label, c) in stats.rows() {
                let row = Row {
                    stage,
                    label,
                    train: c.train,
                    test: c.test,
                    unsplit: c.unsplit,
                    total: c.total,
                };
                println!("{}", serde_json::to_string(&row)?);
            }
        }
    }
    if let Some(dir) = &a.out_dir {
        let mut run = Run::start(dir)?;
        write_json(&run.output("stats.json"), &stats)?;
        run.finish(settings)?;
    }
    Ok(())
}
