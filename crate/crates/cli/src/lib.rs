//! `memeguard` command line: corpus curation, tag generation, exemplar tuning, detection
//! runs, evaluation and the annotation service behind one binary.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 external-service failure.

pub mod cmd;
pub mod config;
pub mod error;
pub mod manifest;
pub mod util;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use config::{BackendArg, CacheModeArg, Settings};
pub use error::{CliError, CliResult, EXIT_EXTERNAL, EXIT_INVALID, EXIT_OK};
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "memeguard", version, about = "Toxic meme moderation research workbench")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every subcommand. Each can also come from the environment or the
/// config file; flags win over environment, environment over file.
#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML config file with [gateway] and [models] tables.
    #[arg(long, global = true, env = "MEMEGUARD_CONFIG")]
    pub config: Option<PathBuf>,
    /// Model endpoint backend.
    #[arg(long, global = true, env = "MEMEGUARD_BACKEND", value_enum)]
    pub backend: Option<BackendArg>,
    /// Fixture file for the stub backend.
    #[arg(long, global = true, env = "MEMEGUARD_STUB_FILE")]
    pub stub_file: Option<PathBuf>,
    /// Directory of the request/response cache.
    #[arg(long, global = true, env = "MEMEGUARD_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// `frozen` serves only cached responses, making runs replayable offline.
    #[arg(long, global = true, env = "MEMEGUARD_CACHE_MODE", value_enum)]
    pub cache_mode: Option<CacheModeArg>,
    /// Concurrent requests to the model endpoints.
    #[arg(long, global = true, env = "MEMEGUARD_PARALLELISM")]
    pub parallelism: Option<usize>,
    /// Directory with prompt template overrides.
    #[arg(long, global = true, env = "MEMEGUARD_TEMPLATES")]
    pub templates: Option<PathBuf>,
    /// The single seed every random choice of the command derives from.
    #[arg(long, global = true, env = "MEMEGUARD_SEED")]
    pub seed: Option<u64>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest, deduplicate, split and describe a corpus.
    Corpus {
        #[command(subcommand)]
        cmd: cmd::corpus::CorpusCmd,
    },
    /// Clean web context, expand tags, write summaries, predict tags, export fine-tuning data.
    Tags {
        #[command(subcommand)]
        cmd: cmd::tags::TagsCmd,
    },
    /// Tune exemplar selection.
    Exemplar {
        #[command(subcommand)]
        cmd: cmd::exemplar::ExemplarCmd,
    },
    /// Few-shot classification runs.
    Detect {
        #[command(subcommand)]
        cmd: cmd::detect::DetectCmd,
    },
    /// Metrics and corpus analyses.
    Eval {
        #[command(subcommand)]
        cmd: cmd::eval::EvalCmd,
    },
    /// Annotation service and offline administration.
    Annotate {
        #[command(subcommand)]
        cmd: cmd::annotate::AnnotateCmd,
    },
}

/// Output shape of evaluation commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    /// Aligned human-readable table.
    #[default]
    Table,
    /// One JSON object per line.
    Records,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_INVALID;
        }
    };
    init_logging(cli.global.verbose);
    let result = Settings::resolve(&cli.global, &matches).and_then(|settings| dispatch(cli.command, &settings));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command, settings: &Settings) -> CliResult<()> {
    match command {
        Command::Corpus { cmd } => cmd::corpus::run(cmd, settings),
        Command::Tags { cmd } => cmd::tags::run(cmd, settings),
        Command::Exemplar { cmd } => cmd::exemplar::run(cmd, settings),
        Command::Detect { cmd } => cmd::detect::run(cmd, settings),
        Command::Eval { cmd } => cmd::eval::run(cmd, settings),
        Command::Annotate { cmd } => cmd::annotate::run(cmd, settings),
    }
}
