use std::path::PathBuf;

use clap::{Args, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use memeguard::corpus::PostRecord;
use memeguard::detect::Harness;
use memeguard::exemplar::GatewaySimilarity;

use super::detect::SetupArgs;
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::{write_json, write_rows};

#[derive(Debug, Subcommand)]
pub enum ExemplarCmd {
    /// Grid-search the image weight α of a combined strategy on a held-out slice of train.
    TuneAlpha(TuneArgs),
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Labeled train posts held out as the validation set; the rest form the exemplar pool.
    #[arg(long, default_value_t = 100)]
    pub validation_size: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(cmd: ExemplarCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        ExemplarCmd::TuneAlpha(a) => tune(a, settings),
    }
}

fn tune(a: TuneArgs, settings: &Settings) -> CliResult<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        best_alpha: f64,
        validation: Vec<&'a str>,
        pool_size: usize,
    }
    if !a.setup.strategy.is_combined() {
        return Err(CliError::invalid(format!(
            "{} has no alpha to tune; use image_gt_combined or image_pred_combined",
            a.setup.strategy.as_str()
        )));
    }
    let base = a.setup.config(settings, Some(0.0));
    let corpus = a.setup.load_corpus()?;
    let predicted = a.setup.predicted()?;
    let gateway = settings.gateway()?;
    let templates = settings.templates()?;
    let similarity = GatewaySimilarity::new(&gateway, &settings.models.clip, &corpus);
    let harness = Harness {
        gateway: &gateway,
        templates: &templates,
        corpus: &corpus,
        similarity: &similarity,
        predicted: predicted.as_ref(),
    };

    let mut labeled: Vec<&PostRecord> = harness.exemplar_pool(&base.label_space);
    if labeled.len() <= a.validation_size || a.validation_size == 0 {
        return Err(CliError::invalid(format!(
            "{} labeled train post(s) cannot yield a validation set of {} and a non-empty pool",
            labeled.len(),
            a.validation_size
        )));
    }
    labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(settings.seed));
    let pool = labeled.split_off(a.validation_size);
    let mut validation = labeled;
    validation.sort_by(|x, y| x.id.cmp(&y.id));

    let mut run = Run::start(&a.out_dir)?;
    run.template_checksums = templates.checksums();
    run.seeds.insert("validation_split".into(), settings.seed);
    let (best, rows) = harness.tune_alpha(&base, &validation, &pool)?;
    write_rows(&run.output("alpha_table.jsonl"), &rows)?;
    write_json(
        &run.output("tune_summary.json"),
        &Summary {
            best_alpha: best,
            validation: validation.iter().map(|p| p.id.as_str()).collect(),
            pool_size: pool.len(),
        },
    )?;
    println!("alpha     macro_f1");
    for r in &rows {
        match r.macro_f1 {
            Some(f) => println!("{:<9.1} {f:.4}", r.alpha),
            None => println!("{:<9.1} failed: {}", r.alpha, r.error.as_deref().unwrap_or("")),
        }
    }
    println!("best alpha {best:.1}");
    let errored = rows.iter().filter(|r| r.error.is_some()).count();
    run.note("best_alpha", best);
    run.finish(settings)?;
    if errored > 0 {
        return Err(CliError::external(format!("{errored} grid point(s) could not be evaluated")));
    }
    Ok(())
}
