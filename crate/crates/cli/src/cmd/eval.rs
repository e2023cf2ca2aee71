use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use memeguard::jsonl::read_jsonl;
use memeguard::labels::Stage;
use memeguard::metrics::{
    agreement_from_labels, bleu, chrf, cooccurrence, meteor_lite, rouge_l, sbert_cosine, top_tags,
    word_frequencies, AgreementReport, TagScorer, TagSimMethod,
};
use memeguard::par::par_map;
use memeguard::tagging::SummaryRecord;
use memeguard_annotation::{stage_agreement, Journal, State};

use super::tags::read_predicted;
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::{emit, emit_metrics, load, write_json};
use crate::Format;

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Mean-of-max similarity between ground-truth and predicted tags.
    Tags(TagsArgs),
    /// Text-overlap and embedding metrics between generated and reference summaries.
    Summaries(SummariesArgs),
    /// Fleiss' kappa of the annotation records of one stage.
    Agreement(AgreementArgs),
    /// Tag pairs that occur together on at least --min-count posts.
    Cooccur(CooccurArgs),
    /// Most frequent tags (or title/OCR words with --words).
    TopTags(TopTagsArgs),
}

#[derive(Debug, Args)]
pub struct TagsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// predicted_tags.jsonl from `tags predict`.
    #[arg(long)]
    pub predicted: PathBuf,
    /// semantic, token_f1 or conceptnet.
    #[arg(long, default_value = "semantic")]
    pub method: TagSimMethod,
    /// Compare web expansions of the tags instead of the tags themselves.
    #[arg(long)]
    pub expanded: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Also write the full report (and a run manifest) here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummariesArgs {
    /// Generated summaries (jsonl of summary records).
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference summaries, matched by post id.
    #[arg(long)]
    pub references: PathBuf,
    /// Add sentence-embedding cosine (needs the embeddings endpoint).
    #[arg(long)]
    pub sbert: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Annotation records (jsonl with sample, annotator, stage, label).
    #[arg(long, conflicts_with = "journal", required_unless_present = "journal")]
    pub records: Option<PathBuf>,
    /// Annotation service journal.
    #[arg(long)]
    pub journal: Option<PathBuf>,
    /// I or II.
    #[arg(long)]
    pub stage: Stage,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CooccurArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Restrict to posts of one class (normal, toxic, hateful, dangerous, offensive, undecided).
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub min_count: usize,
    /// Print at most this many pairs.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TopTagsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Count words of titles and OCR text instead of tags.
    #[arg(long)]
    pub words: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

pub fn run(cmd: EvalCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        EvalCmd::Tags(a) => tags(a, settings),
        EvalCmd::Summaries(a) => summaries(a, settings),
        EvalCmd::Agreement(a) => agreement(a),
        EvalCmd::Cooccur(a) => cooccur(a),
        EvalCmd::TopTags(a) => top(a),
    }
}

fn tags(a: TagsArgs, settings: &Settings) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let predicted = read_predicted(&a.predicted)?;
    let mut items = Vec::new();
    for (id, generated) in &predicted {
        let post = corpus
            .get(id)
            .ok_or_else(|| CliError::invalid(format!("predicted tags for unknown post {id}")))?;
        items.push((id.clone(), post.tags.clone(), generated.clone()));
    }
    let gateway = settings.gateway()?;
    let scorer = TagScorer::new(&gateway, &settings.models.sentence, &settings.models.token);
    let report = scorer.report(&items, a.method, a.expanded)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut metrics = BTreeMap::new();
    metrics.insert(format!("{}{}", a.method, if a.expanded { "_expanded" } else { "" }), report.mean);
    metrics.insert("n_posts".into(), report.per_post.len() as f64);
    emit_metrics(a.format, &metrics)?;
    if let Some(dir) = &a.out_dir {
        let mut run = Run::start(dir)?;
        write_json(&run.output("tag_similarity.json"), &report)?;
        run.finish(settings)?;
    }
    Ok(())
}

fn summaries(a: SummariesArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct PerPost {
        post_id: String,
        scores: BTreeMap<&'static str, f64>,
    }
    let candidates: Vec<SummaryRecord> = read_jsonl(&a.candidates)?;
    let references: BTreeMap<String, SummaryRecord> = read_jsonl::<SummaryRecord>(&a.references)?
        .into_iter()
        .map(|s| (s.post_id.clone(), s))
        .collect();
    let mut pairs: Vec<(String, String, String)> = Vec::new();
    let mut unmatched = 0;
    for c in candidates {
        match references.get(&c.post_id) {
            Some(r) => pairs.push((c.post_id, c.text, r.text.clone())),
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        eprintln!("warning: {unmatched} candidate(s) without a reference were skipped");
    }
    if pairs.is_empty() {
        return Err(CliError::invalid("no candidate summary has a matching reference"));
    }
    pairs.sort();
    let gateway = if a.sbert { Some(settings.gateway()?) } else { None };
    let workers = gateway.as_ref().map_or(1, |g| g.parallelism());
    let scored = par_map(&pairs, workers, |(id, cand, reference)| -> CliResult<PerPost> {
        let mut scores = BTreeMap::new();
        scores.insert("bleu", bleu(cand, reference)?);
        scores.insert("chrf", chrf(cand, reference)?);
        scores.insert("rouge_l", rouge_l(cand, reference)?);
        scores.insert("meteor", meteor_lite(cand, reference)?);
        if let Some(g) = &gateway {
            scores.insert("sbert", sbert_cosine(g, &settings.models.sentence, cand, reference)?);
        }
        Ok(PerPost {
            post_id: id.clone(),
            scores,
        })
    });
    let per_post: Vec<PerPost> = scored.into_iter().collect::<CliResult<_>>()?;
    let mut metrics: BTreeMap<String, f64> = BTreeMap::new();
    for p in &per_post {
        for (k, v) in &p.scores {
            *metrics.entry((*k).to_string()).or_default() += v / per_post.len() as f64;
        }
    }
    metrics.insert("n_pairs".into(), per_post.len() as f64);
    emit_metrics(a.format, &metrics)?;
    if let Some(dir) = &a.out_dir {
        let mut run = Run::start(dir)?;
        write_json(&run.output("summary_metrics.json"), &metrics)?;
        crate::util::write_rows(&run.output("summary_scores.jsonl"), &per_post)?;
        run.finish(settings)?;
    }
    Ok(())
}

/// The fields of an annotation record that agreement needs.
#[derive(Debug, Deserialize)]
struct LabelRow {
    #[serde(alias = "sample_id", alias = "post_id")]
    sample: String,
    stage: Stage,
    label: String,
}

fn agreement_from_rows(rows: &[LabelRow], stage: Stage) -> CliResult<AgreementReport> {
    let mut by_sample: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.stage == stage) {
        by_sample.entry(&r.sample).or_default().push(&r.label);
    }
    if by_sample.is_empty() {
        return Err(CliError::invalid(format!("no stage {stage} records")));
    }
    // kappa needs a constant rater count; use the most common one and report the rest
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for labels in by_sample.values() {
        *counts.entry(labels.len()).or_default() += 1;
    }
    let raters = counts.iter().max_by_key(|(n, c)| (**c, **n)).map(|(n, _)| *n).unwrap_or(0);
    let skipped = by_sample.values().filter(|l| l.len() != raters).count();
    if skipped > 0 {
        eprintln!("warning: {skipped} sample(s) without exactly {raters} labels were left out");
    }
    let items: Vec<&Vec<&str>> = by_sample.values().filter(|l| l.len() == raters).collect();
    let items: Vec<Vec<&str>> = items.into_iter().cloned().collect();
    Ok(agreement_from_labels(&items, stage.assignable_labels())?)
}

fn journal_state(path: &Path) -> CliResult<State> {
    if !path.is_file() {
        return Err(CliError::invalid(format!("journal {} not found", path.display())));
    }
    let (_, events) = Journal::open(path)?;
    Ok(State::replay(events))
}

fn agreement(a: AgreementArgs) -> CliResult<()> {
    let report = match (&a.records, &a.journal) {
        (Some(path), _) => agreement_from_rows(&read_jsonl::<LabelRow>(path)?, a.stage)?,
        (None, Some(path)) => stage_agreement(&journal_state(path)?, a.stage)?,
        (None, None) => return Err(CliError::invalid("--records or --journal is required")),
    };
    match a.format {
        Format::Records => println!("{}", serde_json::to_string(&report)?),
        Format::Table => {
            let mut metrics = BTreeMap::new();
            metrics.insert("kappa".to_string(), report.kappa);
            metrics.insert("n_items".to_string(), report.n_items as f64);
            metrics.insert("n_raters".to_string(), f64::from(report.n_raters));
            metrics.insert("observed".to_string(), report.observed);
            metrics.insert("expected".to_string(), report.expected);
            emit_metrics(Format::Table, &metrics)?;
        }
    }
    Ok(())
}

fn cooccur(a: CooccurArgs) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let mut pairs = cooccurrence(&corpus, a.class.as_deref(), a.min_count);
    if let Some(n) = a.top {
        pairs.truncate(n);
    }
    emit(a.format, &["a", "b", "count"], &pairs)
}

fn top(a: TopTagsArgs) -> CliResult<()> {
    let corpus = load(&a.corpus, false)?;
    let ranked = if a.words {
        word_frequencies(&corpus, a.class.as_deref(), a.n)
    } else {
        top_tags(&corpus, a.class.as_deref(), a.n)
    };
    emit(a.format, &["item", "count"], &ranked)
}
