use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::FixedOffset;
use clap::{Args, Subcommand};

use memeguard::jsonl::read_jsonl;
use memeguard::labels::{Stage, Stage1Label};
use memeguard::tagging::{SummaryKind, SummaryRecord};
use memeguard_annotation::{BatchRequest, Journal, Service, ServiceConfig, State, SystemClock};

use super::split_list;
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::{load, save, write_json};

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    /// Run the annotation HTTP service. Admin routes need MEMEGUARD_ADMIN_TOKEN.
    Serve(ServeArgs),
    /// Assign samples to annotators (three per sample) in the journal.
    Batch(BatchArgs),
    /// Majority-vote a stage and write the labeled corpus.
    Finalize(FinalizeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ServiceArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Append-only event journal holding all service state.
    #[arg(long)]
    pub journal: PathBuf,
    /// Daily submission cap for annotators registered without one.
    #[arg(long, default_value_t = 50)]
    pub daily_cap: u32,
    /// Offset whose local midnight starts a new annotation day, e.g. +05:30.
    #[arg(long, default_value = "+00:00", allow_hyphen_values = true)]
    pub utc_offset: FixedOffset,
}

impl ServiceArgs {
    fn open(&self, rateable: Option<BTreeSet<String>>) -> CliResult<Service> {
        if self.daily_cap == 0 {
            return Err(CliError::invalid("--daily-cap must be at least 1"));
        }
        let corpus = load(&self.corpus, false)?;
        let config = ServiceConfig {
            default_daily_cap: self.daily_cap,
            utc_offset: self.utc_offset,
            rateable,
        };
        Ok(Service::open(corpus, config, Arc::new(SystemClock), self.journal.clone())?)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Ground-truth summaries; only their posts can be rated.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    /// I or II.
    #[arg(long)]
    pub stage: Stage,
    /// Comma-separated annotator ids; samples are dealt round-robin, three per sample.
    #[arg(long)]
    pub annotators: String,
    /// Comma-separated sample ids.
    #[arg(long, conflicts_with = "samples_file")]
    pub samples: Option<String>,
    /// File with one sample id per line.
    #[arg(long)]
    pub samples_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FinalizeArgs {
    #[command(flatten)]
    pub service: ServiceArgs,
    #[arg(long)]
    pub stage: Stage,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(cmd: AnnotateCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        AnnotateCmd::Serve(a) => serve(a),
        AnnotateCmd::Batch(a) => batch(a),
        AnnotateCmd::Finalize(a) => finalize(a, settings),
    }
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let rateable = match &a.summaries {
        Some(path) => Some(
            read_jsonl::<SummaryRecord>(path)?
                .into_iter()
                .filter(|s| s.kind == SummaryKind::GroundTruth)
                .map(|s| s.post_id)
                .collect(),
        ),
        None => None,
    };
    let service = Arc::new(a.service.open(rateable)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::invalid(format!("cannot start runtime: {e}")))?;
    eprintln!("serving on http://{}", a.addr);
    runtime
        .block_on(memeguard_annotation::serve(service, a.addr))
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.addr)))
}

/// Samples a batch covers when none are listed: every post for stage I; for stage II every
/// post whose stage I outcome is toxic.
fn default_samples(a: &BatchArgs) -> CliResult<Vec<String>> {
    let corpus = load(&a.service.corpus, false)?;
    let state = if a.service.journal.is_file() {
        State::replay(Journal::open(&a.service.journal)?.1)
    } else {
        State::default()
    };
    let ids = corpus
        .records
        .iter()
        .filter(|p| match a.stage {
            Stage::One => true,
            Stage::Two => match state.stage_final_label(Stage::One, &p.id) {
                Some(l) => l == "toxic",
                None => p.stage1_label == Some(Stage1Label::Toxic),
            },
        })
        .map(|p| p.id.clone())
        .collect();
    Ok(ids)
}

fn batch(a: BatchArgs) -> CliResult<()> {
    let annotators = split_list(&a.annotators);
    let samples = match (&a.samples, &a.samples_file) {
        (Some(list), _) => split_list(list),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        (None, None) => default_samples(&a)?,
    };
    let service = a.service.open(None)?;
    let receipt = service.create_batch(BatchRequest {
        stage: a.stage,
        assignments: Vec::new(),
        samples,
        annotators,
    })?;
    println!("{}", serde_json::to_string_pretty(&receipt)?);
    Ok(())
}

fn finalize(a: FinalizeArgs, settings: &Settings) -> CliResult<()> {
    let service = a.service.open(None)?;
    let result = service.finalize(a.stage)?;
    let mut run = Run::start(&a.out_dir)?;
    write_json(&run.output("finalization.json"), &result)?;
    match service.agreement(a.stage) {
        Ok(report) => {
            println!("kappa {:.4} over {} sample(s)", report.kappa, report.n_items);
            write_json(&run.output("agreement.json"), &report)?;
        }
        Err(e) => eprintln!("warning: no agreement report: {e}"),
    }
    save(&service.labeled_corpus(), &run.output("manifest.jsonl"))?;
    println!(
        "stage {}: {} labeled, {} undecided",
        a.stage,
        result.labels.len(),
        result.undecided.len()
    );
    run.finish(settings)?;
    Ok(())
}
