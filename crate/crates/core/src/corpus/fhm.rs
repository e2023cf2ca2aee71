//! Loader for the Hateful Memes challenge layout (`img/`, `dev*.jsonl`, `test*.jsonl`).
//!
//! Dev posts become the exemplar pool (train split) and test posts the scored split.
//! Label 1 maps to toxic + hateful and label 0 to normal, so the `fhm` label space reads
//! them back as hateful / not-hateful.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{Corpus, LineError, LoadReport, PostRecord, Split};
use crate::error::{Error, Result};
use crate::labels::{Stage1Label, Stage2Label};

#[derive(Debug, Deserialize)]
struct FhmLine {
    id: serde_json::Value,
    img: String,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default)]
    text: String,
}

fn id_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn read_split(path: &Path, split: Split, records: &mut Vec<PostRecord>, errors: &mut Vec<LineError>) -> Result<()> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| LineError {
            line: idx + 1,
            message: format!("{}: {message}", path.display()),
        };
        let parsed: FhmLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                errors.push(fail(e.to_string()));
                continue;
            }
        };
        let Some(id) = id_string(&parsed.id) else {
            errors.push(fail("id must be a string or number".into()));
            continue;
        };
        let mut post = PostRecord::new(format!("fhm-{id}"), parsed.img);
        post.ocr_text = parsed.text;
        post.split = Some(split);
        match parsed.label {
            Some(1) => {
                post.stage1_label = Some(Stage1Label::Toxic);
                post.stage2_label = Some(Stage2Label::Hateful);
            }
            Some(0) => post.stage1_label = Some(Stage1Label::Normal),
            Some(other) => {
                errors.push(fail(format!("label must be 0 or 1, got {other}")));
                continue;
            }
            None => {
                errors.push(fail("unlabeled line".into()));
                continue;
            }
        }
        records.push(post);
    }
    Ok(())
}

/// Load the dev and test files of a Hateful Memes directory. Image paths resolve against `root`.
pub fn load_fhm(root: &Path, dev_file: &str, test_file: &str) -> Result<LoadReport> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    read_split(&root.join(dev_file), Split::Train, &mut records, &mut errors)?;
    read_split(&root.join(test_file), Split::Test, &mut records, &mut errors)?;

    let mut seen = std::collections::HashSet::new();
    records.retain(|r| {
        let fresh = seen.insert(r.id.clone());
        if !fresh {
            errors.push(LineError {
                line: 0,
                message: format!("duplicate id '{}' across files; later copy dropped", r.id),
            });
        }
        fresh
    });
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
