use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};

use memeguard::corpus::{load_fhm, Corpus};
use memeguard::detect::{DetectionConfig, Harness, PredictionStatus, UnparsedPolicy};
use memeguard::exemplar::{GatewaySimilarity, PredictedTags, SelectionStrategy, StrategyKind};
use memeguard::labels::LabelSpace;

use super::tags::read_predicted;
use super::{record_failures, Failure};
use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::load;

#[derive(Debug, Subcommand)]
pub enum DetectCmd {
    /// Classify every labeled test post with few-shot exemplars from the train split.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    /// Toxic vs normal.
    #[value(name = "I")]
    One,
    /// Hateful, dangerous or offensive, for decided toxic posts.
    #[value(name = "II")]
    Two,
    /// Hateful vs not-hateful on the Facebook Hateful Memes files.
    #[value(name = "fhm")]
    Fhm,
}

impl StageArg {
    pub fn space(self) -> LabelSpace {
        match self {
            Self::One => LabelSpace::stage1(),
            Self::Two => LabelSpace::stage2(),
            Self::Fhm => LabelSpace::fhm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum PolicyArg {
    /// Unusable answers count as wrong.
    #[default]
    Strict,
    /// Unusable answers are excluded from scoring.
    Drop,
}

impl From<PolicyArg> for UnparsedPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Strict => UnparsedPolicy::Strict,
            PolicyArg::Drop => UnparsedPolicy::Drop,
        }
    }
}

/// Where the posts come from and how exemplars are picked; shared with `exemplar tune-alpha`.
#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    /// Corpus manifest with labels and splits (not needed for --stage fhm).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: StageArg,
    /// random, image, gt_tags, pred_tags, image_gt_combined, image_pred_combined (or I_r, I_i, …).
    #[arg(long, default_value = "image_gt_combined")]
    pub strategy: StrategyKind,
    /// Number of exemplars per prompt.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// predicted_tags.jsonl from `tags predict`, required by the predicted-tag strategies.
    #[arg(long)]
    pub predicted: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Strict)]
    pub policy: PolicyArg,
    /// Directory with the Facebook Hateful Memes jsonl files and images.
    #[arg(long)]
    pub fhm_dir: Option<PathBuf>,
    #[arg(long, default_value = "dev_seen.jsonl")]
    pub fhm_dev: String,
    #[arg(long, default_value = "test_seen.jsonl")]
    pub fhm_test: String,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Image weight of the combined strategies.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl SetupArgs {
    pub fn load_corpus(&self) -> CliResult<Corpus> {
        match (self.stage, &self.fhm_dir, &self.corpus) {
            (StageArg::Fhm, Some(dir), _) => {
                let report = load_fhm(dir, &self.fhm_dev, &self.fhm_test)?;
                for e in &report.errors {
                    eprintln!("warning: fhm line {}: {}", e.line, e.message);
                }
                Ok(report.corpus)
            }
            (StageArg::Fhm, None, Some(path)) | (StageArg::One | StageArg::Two, _, Some(path)) => load(path, false),
            (StageArg::Fhm, None, None) => Err(CliError::invalid("--stage fhm needs --fhm-dir or --corpus")),
            _ => Err(CliError::invalid("--corpus is required")),
        }
    }

    pub fn predicted(&self) -> CliResult<Option<PredictedTags>> {
        if self.strategy.tag_source() == Some(memeguard::exemplar::TagSource::Predicted) && self.predicted.is_none() {
            return Err(CliError::invalid(format!(
                "strategy {} needs --predicted",
                self.strategy.as_str()
            )));
        }
        self.predicted.as_deref().map(read_predicted).transpose()
    }

    /// Detection config for this setup; the seed only enters for random selection.
    pub fn config(&self, settings: &Settings, alpha: Option<f64>) -> DetectionConfig {
        let mut strategy = SelectionStrategy::new(self.strategy, self.k);
        if let Some(a) = alpha {
            strategy = strategy.with_alpha(a);
        }
        if self.strategy == StrategyKind::Random {
            strategy = strategy.with_seed(settings.seed);
        }
        let mut config = DetectionConfig::new(self.stage.space(), strategy, &settings.models.detector);
        config.policy = self.policy.into();
        config
    }
}

pub fn run(cmd: DetectCmd, settings: &Settings) -> CliResult<()> {
    match cmd {
        DetectCmd::Run(a) => detect_run(a, settings),
    }
}

fn detect_run(a: RunArgs, settings: &Settings) -> CliResult<()> {
    let config = a.setup.config(settings, a.alpha);
    config.strategy.validate()?;
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

    let mut run = Run::start(&a.out_dir)?;
    run.template_checksums = templates.checksums();
    if config.strategy.kind == StrategyKind::Random {
        run.seeds.insert("exemplar_selection".into(), settings.seed);
    }
    let outcome = harness.run_benchmark(&config)?;
    if outcome.records.is_empty() {
        return Err(CliError::invalid(format!(
            "no test-split post has a {} gold label",
            config.label_space.id
        )));
    }
    outcome.write_predictions(&run.output("predictions.jsonl"))?;
    outcome.write_report(&run.output("report.json"))?;
    run.note("config_digest", &outcome.header.config_digest);
    run.note("invalid", outcome.invalid);
    print!("{}", outcome.report.render_table());

    let failures: Vec<Failure> = outcome
        .records
        .iter()
        .filter(|r| r.status == PredictionStatus::Failed)
        .map(|r| Failure {
            post_id: r.post_id.clone(),
            error: r.error.clone().unwrap_or_default(),
        })
        .collect();
    let failed = record_failures(&mut run, &failures)?;
    run.finish(settings)?;
    if let Some(e) = failed {
        return Err(e);
    }
    if outcome.invalid {
        return Err(CliError::external(format!(
            "run invalid: failure rate {:.3} exceeds {}",
            outcome.report.metrics.get("failure_rate").copied().unwrap_or(0.0),
            config.max_failure_rate
        )));
    }
    Ok(())
}
