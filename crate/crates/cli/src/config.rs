//! Effective configuration: command-line flags override environment variables, which override
//! the TOML config file, which overrides built-in defaults. Where each value came from is
//! recorded so the run manifest can say so.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::{Deserialize, Serialize};

use memeguard::gateway::{sha256_hex, BackendKind, CacheMode, Gateway, GatewaySettings, ModelIds};
use memeguard::templates::TemplateSet;

use crate::error::{CliError, CliResult};
use crate::GlobalArgs;

pub const DEFAULT_SEED: u64 = 13;

/// The TOML config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub templates_dir: Option<PathBuf>,
    /// Tags that never count as tags (e.g. "memes").
    pub stoplist: Vec<String>,
    pub gateway: GatewaySettings,
    pub models: ModelIds,
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub gateway: GatewaySettings,
    pub models: ModelIds,
    pub templates_dir: Option<PathBuf>,
    pub seed: u64,
    pub stoplist: Vec<String>,
    /// Directory that relative paths from the config file resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Setting name → "flag", "env", "file" or "default".
    pub sources: BTreeMap<String, String>,
}

fn source_of(matches: &ArgMatches, id: &str) -> Option<ValueSource> {
    // global flags are visible at every level; the deepest level has the final say
    let mut found = matches.value_source(id);
    let mut m = matches;
    while let Some((_, sub)) = m.subcommand() {
        if let Some(s) = sub.value_source(id) {
            found = Some(s);
        }
        m = sub;
    }
    found
}

fn label(source: Option<ValueSource>) -> Option<&'static str> {
    match source {
        Some(ValueSource::CommandLine) => Some("flag"),
        Some(ValueSource::EnvVariable) => Some("env"),
        _ => None,
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

impl Settings {
    pub fn resolve(args: &GlobalArgs, matches: &ArgMatches) -> CliResult<Self> {
        let (file, base_dir, file_used) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
                let cfg: FileConfig = toml::from_str(&text)
                    .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
                let dir = absolute(path).parent().map(Path::to_path_buf).unwrap_or_default();
                (cfg, dir, true)
            }
            None => (FileConfig::default(), absolute(Path::new(".")), false),
        };
        let default = FileConfig::default();
        let from_file = |differs: bool| if file_used && differs { "file" } else { "default" };

        let mut sources = BTreeMap::new();
        let mut gateway = file.gateway.clone();
        let mut note = |key: &str, id: &str, differs: bool| {
            let s = label(source_of(matches, id)).unwrap_or_else(|| from_file(differs));
            sources.insert(key.to_string(), s.to_string());
        };

        note("gateway.backend", "backend", file.gateway.backend != default.gateway.backend);
        if let Some(b) = args.backend {
            gateway.backend = b.into();
        }
        note("gateway.stub_file", "stub_file", file.gateway.stub_file.is_some());
        if let Some(p) = &args.stub_file {
            gateway.stub_file = Some(absolute(p));
        }
        note("gateway.cache_dir", "cache_dir", file.gateway.cache_dir.is_some());
        if let Some(p) = &args.cache_dir {
            gateway.cache_dir = Some(absolute(p));
        }
        note("gateway.cache_mode", "cache_mode", file.gateway.cache_mode != default.gateway.cache_mode);
        if let Some(m) = args.cache_mode {
            gateway.cache_mode = m.into();
        }
        note("gateway.parallelism", "parallelism", file.gateway.parallelism != default.gateway.parallelism);
        if let Some(n) = args.parallelism {
            gateway.parallelism = n.max(1);
        }
        note("seed", "seed", file.seed.is_some());
        let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        note("templates_dir", "templates", file.templates_dir.is_some());
        let templates_dir = match &args.templates {
            Some(p) => Some(absolute(p)),
            None => file.templates_dir.as_ref().map(|p| {
                if p.is_absolute() {
                    p.clone()
                } else {
                    base_dir.join(p)
                }
            }),
        };
        sources.insert(
            "models".into(),
            from_file(file.models != default.models).to_string(),
        );

        Ok(Self {
            gateway,
            models: file.models,
            templates_dir,
            seed,
            stoplist: file.stoplist,
            base_dir,
            sources,
        })
    }

    pub fn gateway(&self) -> CliResult<Gateway> {
        Gateway::from_settings(&self.gateway, &self.base_dir).map_err(|e| CliError::invalid(e.to_string()))
    }

    pub fn templates(&self) -> CliResult<TemplateSet> {
        match &self.templates_dir {
            Some(dir) => Ok(TemplateSet::load_dir(dir)?),
            None => Ok(TemplateSet::default()),
        }
    }

    /// sha256 over every setting that can influence outputs.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "gateway": self.gateway,
            "models": self.models,
            "templates_dir": self.templates_dir,
            "seed": self.seed,
            "stoplist": self.stoplist,
        });
        sha256_hex(canonical.to_string().as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendArg {
    Http,
    Stub,
}

impl From<BackendArg> for BackendKind {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Http => BackendKind::Http,
            BackendArg::Stub => BackendKind::Stub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CacheModeArg {
    ReadWrite,
    Frozen,
    Off,
}

impl From<CacheModeArg> for CacheMode {
    fn from(m: CacheModeArg) -> Self {
        match m {
            CacheModeArg::ReadWrite => CacheMode::ReadWrite,
            CacheModeArg::Frozen => CacheMode::Frozen,
            CacheModeArg::Off => CacheMode::Off,
        }
    }
}
