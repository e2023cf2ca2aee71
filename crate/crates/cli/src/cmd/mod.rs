pub mod annotate;
pub mod corpus;
pub mod detect;
pub mod eval;
pub mod exemplar;
pub mod tags;

use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::util::write_rows;

/// A post that could not be processed.
#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub post_id: String,
    pub error: String,
}

/// Persist per-post failures next to the other outputs. Any failure makes the command exit
/// with the external-service code once everything else has been written.
pub fn record_failures(run: &mut Run, failures: &[Failure]) -> CliResult<Option<CliError>> {
    if failures.is_empty() {
        return Ok(None);
    }
    let path = run.output("failures.jsonl");
    write_rows(&path, failures)?;
    run.note("failures", failures.len());
    Ok(Some(CliError::external(format!(
        "{} post(s) failed; see {}",
        failures.len(),
        path.display()
    ))))
}

/// Parse a comma-separated list, dropping empty entries.
pub fn split_list(raw: &str) -> Vec<String> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}
