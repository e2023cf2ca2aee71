//! Versioned prompt templates with `{name}` placeholders.
//!
//! Defaults are compiled in; a directory can override any subset by file name
//! (`<name>.txt`). Checksums of the effective texts go into every run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gateway::sha256_hex;

pub const CAPTION: &str = "caption";
pub const GT_SUMMARY: &str = "gt_summary";
pub const TAGLESS_SUMMARY: &str = "tagless_summary";
pub const EXTRACT_TAGS: &str = "extract_tags";
pub const EXTRACT_TAGS_STRICT: &str = "extract_tags_strict";
pub const DETECT_SYSTEM: &str = "detect_system";
pub const DETECT_STRICT: &str = "detect_strict";
pub const DETECT_QUERY: &str = "detect_query";

const DEFAULTS: &[(&str, &str)] = &[
    (CAPTION, include_str!("../templates/caption.txt")),
    (GT_SUMMARY, include_str!("../templates/gt_summary.txt")),
    (TAGLESS_SUMMARY, include_str!("../templates/tagless_summary.txt")),
    (EXTRACT_TAGS, include_str!("../templates/extract_tags.txt")),
    (EXTRACT_TAGS_STRICT, include_str!("../templates/extract_tags_strict.txt")),
    (DETECT_SYSTEM, include_str!("../templates/detect_system.txt")),
    (DETECT_STRICT, include_str!("../templates/detect_strict.txt")),
    (DETECT_QUERY, include_str!("../templates/detect_query.txt")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    texts: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            texts: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Defaults overridden by any `<name>.txt` present in `dir`. Unknown files are ignored.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for (name, _) in DEFAULTS {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                parse(&text)?;
                set.texts.insert(name.to_string(), text.trim_end().to_string());
            }
        }
        Ok(set)
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        self.texts
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Template(format!("no template named '{name}'")))
    }

    /// sha256 of each template text, keyed by name.
    pub fn checksums(&self) -> BTreeMap<String, String> {
        self.texts
            .iter()
            .map(|(k, v)| (k.clone(), sha256_hex(v.as_bytes())))
            .collect()
    }

    /// Substitute every placeholder. Missing values are an error; `{{` and `}}` escape braces.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String> {
        let mut out = String::new();
        for piece in parse(self.text(name)?)? {
            match piece {
                Piece::Text(t) => out.push_str(&t),
                Piece::Var(v) => {
                    let value = vars
                        .iter()
                        .find(|(k, _)| *k == v)
                        .ok_or_else(|| Error::Template(format!("template '{name}' needs a value for {{{v}}}")))?;
                    out.push_str(value.1);
                }
            }
        }
        Ok(out)
    }

    /// Placeholder names used by a template, in order of first appearance.
    pub fn placeholders(&self, name: &str) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for piece in parse(self.text(name)?)? {
            if let Piece::Var(v) = piece {
                if !names.contains(&v) {
                    names.push(v);
                }
            }
        }
        Ok(names)
    }
}

enum Piece {
    Text(String),
    Var(String),
}

fn parse(text: &str) -> Result<Vec<Piece>> {
    let mut pieces = Vec::new();
    let mut buf = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                buf.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                buf.push('}');
            }
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                        _ => return Err(Error::Template(format!("malformed placeholder near '{{{name}'"))),
                    }
                }
                if name.is_empty() {
                    return Err(Error::Template("empty placeholder '{}'".into()));
                }
                pieces.push(Piece::Text(std::mem::take(&mut buf)));
                pieces.push(Piece::Var(name));
            }
            '}' => return Err(Error::Template("unmatched '}' in template".into())),
            other => buf.push(other),
        }
    }
    pieces.push(Piece::Text(buf));
    Ok(pieces)
}
