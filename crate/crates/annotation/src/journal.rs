//! Append-only event log. The service state is a pure fold over these events, so a restart
//! replays the file and arrives at exactly the state it had before.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::ServiceError;
use crate::model::Event;

#[derive(Debug)]
pub struct Journal {
    path: Option<PathBuf>,
    file: Option<File>,
}

impl Journal {
    /// A journal that keeps nothing; for tests and throwaway sessions.
    pub fn in_memory() -> Self {
        Self { path: None, file: None }
    }

    /// Open (creating if needed) the journal at `path` and return it with its past events.
    ///
    /// A torn final line — the signature of a crash mid-append — is dropped with a warning;
    /// a malformed line anywhere else is an error, since silently skipping it would change
    /// history.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>), ServiceError> {
        let mut events = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| ServiceError::io(path, e))?);
            let lines: Vec<String> = reader
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|e| ServiceError::io(path, e))?;
            let last = lines.iter().rposition(|l| !l.trim().is_empty());
            for (idx, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Event>(line) {
                    Ok(ev) => events.push(ev),
                    Err(e) if Some(idx) == last => {
                        tracing::warn!(line = idx + 1, error = %e, "dropping torn final journal line");
                    }
                    Err(e) => {
                        return Err(ServiceError::Internal(format!(
                            "{}:{}: corrupt journal entry: {e}",
                            path.display(),
                            idx + 1
                        )))
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        Ok((
            Self {
                path: Some(path.to_path_buf()),
                file: Some(file),
            },
            events,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Durably append one event before it is applied to the in-memory state.
    pub fn append(&mut self, event: &Event) -> Result<(), ServiceError> {
        let Some(file) = self.file.as_mut() else {
            return Ok(());
        };
        let mut line = serde_json::to_string(event).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push('\n');
        let path = self.path.clone().unwrap_or_default();
        file.write_all(line.as_bytes()).map_err(|e| ServiceError::io(&path, e))?;
        file.sync_data().map_err(|e| ServiceError::io(&path, e))
    }
}
