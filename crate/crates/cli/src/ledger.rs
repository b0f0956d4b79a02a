use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::CliError;

/// Append-only record of finished work units, one `ok <key>` or
/// `failed <key> <reason>` line each.
pub struct Ledger {
    path: PathBuf,
    file: Mutex<File>,
    done: BTreeSet<String>,
}

impl Ledger {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let done = match std::fs::read_to_string(path) {
            Ok(text) => text
                .lines()
                .filter_map(|l| l.strip_prefix("ok "))
                .map(|k| k.trim().to_owned())
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeSet::new(),
            Err(e) => return Err(CliError::io(path, e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self { path: path.to_owned(), file: Mutex::new(file), done })
    }

    pub fn is_done(&self, key: &str) -> bool {
        self.done.contains(key)
    }

    pub fn record(&self, key: &str, outcome: &Result<(), String>) -> Result<(), CliError> {
        let line = match outcome {
            Ok(()) => format!("ok {key}\n"),
            Err(msg) => format!("failed {key} {}\n", msg.replace('\n', " ")),
        };
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes()).and_then(|_| file.flush()).map_err(|e| CliError::io(&self.path, e))
    }
}
