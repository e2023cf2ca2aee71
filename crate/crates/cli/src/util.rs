use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use memeguard::corpus::{load_corpus, Corpus};
use memeguard::jsonl::write_jsonl;

use crate::error::{CliError, CliResult};
use crate::Format;

/// Load a manifest, reporting skipped lines and missing images on stderr.
pub fn load(path: &Path, strict: bool) -> CliResult<Corpus> {
    let report = load_corpus(path)?;
    for e in &report.errors {
        eprintln!("warning: {}:{}: {}", path.display(), e.line, e.message);
    }
    if !report.missing_images.is_empty() {
        eprintln!(
            "warning: {} record(s) reference a missing image (first: {})",
            report.missing_images.len(),
            report.missing_images[0]
        );
    }
    if strict && !report.errors.is_empty() {
        return Err(CliError::invalid(format!(
            "{} malformed manifest line(s) in {}",
            report.errors.len(),
            path.display()
        )));
    }
    Ok(report.corpus)
}

/// Write `corpus` as a manifest at `path`. When the manifest moves away from the corpus
/// root, image paths are made absolute so they still resolve.
pub fn save(corpus: &Corpus, path: &Path) -> CliResult<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let same_root = std::fs::canonicalize(dir).ok() == std::fs::canonicalize(&corpus.root).ok();
    let out = if same_root {
        corpus.clone()
    } else {
        let records = corpus
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let resolved = corpus.resolve_image(&r);
                r.image_path = std::fs::canonicalize(&resolved).unwrap_or(resolved);
                r
            })
            .collect();
        corpus.with_records(records)
    };
    Ok(out.write_manifest(path)?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    Ok(write_jsonl(path, rows)?)
}

/// Print rows either as JSON lines or as an aligned table of the given columns.
pub fn emit<T: Serialize>(format: Format, columns: &[&str], rows: &[T]) -> CliResult<()> {
    let values: Vec<serde_json::Value> = rows.iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
    match format {
        Format::Records => {
            for v in &values {
                println!("{}", serde_json::to_string(v)?);
            }
        }
        Format::Table => {
            let cell = |v: &serde_json::Value, c: &str| match &v[c] {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => match n.as_f64() {
                    Some(f) if n.is_f64() => format!("{f:.4}"),
                    _ => n.to_string(),
                },
                serde_json::Value::Null => String::new(),
                other => other.to_string(),
            };
            let grid: Vec<Vec<String>> = values.iter().map(|v| columns.iter().map(|c| cell(v, c)).collect()).collect();
            let widths: Vec<usize> = columns
                .iter()
                .enumerate()
                .map(|(i, c)| grid.iter().map(|r| r[i].chars().count()).chain([c.len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: Vec<String>| {
                cells
                    .iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            println!("{}", line(columns.iter().map(|c| c.to_string()).collect()));
            for row in grid {
                println!("{}", line(row));
            }
        }
    }
    Ok(())
}

/// Print a flat name → value map in the chosen format.
pub fn emit_metrics(format: Format, metrics: &BTreeMap<String, f64>) -> CliResult<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        metric: &'a str,
        value: f64,
    }
    let rows: Vec<Row<'_>> = metrics.iter().map(|(k, v)| Row { metric: k, value: *v }).collect();
    emit(format, &["metric", "value"], &rows)
}
