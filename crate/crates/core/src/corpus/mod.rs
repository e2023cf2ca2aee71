//! Meme corpus: manifest ingestion, tag cleanup, deduplication, splitting and statistics.

mod clean;
mod dedup;
mod fhm;
mod split;
mod stats;

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Stage1Label, Stage2Label};

pub use clean::{clean_tag_list, clean_tags, filter_min_comments};
pub use dedup::{
    dedup_exact, dedup_perceptual, dhash_bytes, dhash_file, hamming, DedupOutcome, DuplicateGroup,
    PerceptualHash,
};
pub use fhm::load_fhm;
pub use split::{split_train_test, SplitConfig};
pub use stats::{corpus_stats, CorpusStats, LabelCounts};

/// Default manifest filename looked up when a directory is given.
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Pixel-space rectangle of one OCR text region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One meme post with its metadata, labels and enrichment context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub id: String,
    pub image_path: PathBuf,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub ocr_text: String,
    #[serde(default)]
    pub ocr_boxes: Vec<OcrBox>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub comment_count: u32,
    #[serde(default)]
    pub stream: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens_context_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lens_context_clean: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_label: Option<Stage1Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_label: Option<Stage2Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl PostRecord {
    /// Minimal record, mostly useful for fixtures.
    pub fn new(id: impl Into<String>, image_path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            image_path: image_path.into(),
            title: String::new(),
            ocr_text: String::new(),
            ocr_boxes: Vec::new(),
            tags: Vec::new(),
            comment_count: 0,
            stream: String::new(),
            lens_context_raw: None,
            lens_context_clean: None,
            stage1_label: None,
            stage2_label: None,
            split: None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".into());
        }
        if self.stage2_label.is_some() && self.stage1_label != Some(Stage1Label::Toxic) {
            return Err("stage2_label present but stage1_label is not toxic".into());
        }
        Ok(())
    }

    /// True when the post has a stage II label other than `undecided`.
    pub fn is_stage2_decided(&self) -> bool {
        matches!(
            self.stage2_label,
            Some(Stage2Label::Hateful | Stage2Label::Dangerous | Stage2Label::Offensive)
        )
    }
}

/// An in-memory corpus. Operations return new corpora and never mutate in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    /// Directory image paths are resolved against.
    pub root: PathBuf,
    pub records: Vec<PostRecord>,
}

impl Corpus {
    pub fn new(root: impl Into<PathBuf>, records: Vec<PostRecord>) -> Self {
        Self {
            root: root.into(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PostRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn resolve_image(&self, post: &PostRecord) -> PathBuf {
        if post.image_path.is_absolute() {
            post.image_path.clone()
        } else {
            self.root.join(&post.image_path)
        }
    }

    pub fn with_records(&self, records: Vec<PostRecord>) -> Self {
        Self {
            root: self.root.clone(),
            records,
        }
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &PostRecord> {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    /// Write the corpus as a line-delimited manifest.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = io::BufWriter::new(file);
        for record in &self.records {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// A manifest line that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Outcome of [`load_corpus`]: the records plus everything that went wrong along the way.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub corpus: Corpus,
    pub errors: Vec<LineError>,
    /// Ids of records whose image file does not exist. These records are retained.
    pub missing_images: Vec<String>,
}

/// Load a manifest file, or `manifest.jsonl` inside a directory.
///
/// Malformed lines are skipped and reported with their 1-based line number; records whose
/// image is missing are kept and flagged. A missing manifest is the only fatal error.
pub fn load_corpus(path: &Path) -> Result<LoadReport> {
    let manifest = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let file = fs::File::open(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let root = manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    read_manifest(BufReader::new(file), root)
}

pub fn read_manifest(reader: impl BufRead, root: PathBuf) -> Result<LoadReport> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(&root, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PostRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                errors.push(LineError {
                    line: lineno,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if let Err(message) = record.validate() {
            errors.push(LineError {
                line: lineno,
                message,
            });
            continue;
        }
        if !seen.insert(record.id.clone()) {
            errors.push(LineError {
                line: lineno,
                message: format!("duplicate id '{}'", record.id),
            });
            continue;
        }
        records.push(record);
    }

    let corpus = Corpus::new(root, records);
    let missing_images = corpus
        .records
        .iter()
        .filter(|r| !corpus.resolve_image(r).is_file())
        .map(|r| r.id.clone())
        .collect();
    Ok(LoadReport {
        corpus,
        errors,
        missing_images,
    })
}
