//! Output documents and atomic file writes.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Where and how a command writes its result.
pub struct Sink {
    pub command: &'static str,
    pub config: Value,
    pub out: Option<PathBuf>,
    pub timestamp: bool,
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Sink {
    /// Comment lines that open every CSV output.
    fn csv_preamble(&self) -> String {
        let mut s = format!("# command={}\n# config={}\n", self.command, self.config);
        if self.timestamp {
            s.push_str(&format!("# generated_at={}\n", unix_seconds()));
        }
        s
    }

    pub fn csv(&self, body: &str) -> Result<(), CliError> {
        let mut text = self.csv_preamble();
        text.push_str(body);
        self.emit(text.as_bytes())
    }

    pub fn json<T: Serialize>(&self, result: &T) -> Result<(), CliError> {
        let result = serde_json::to_value(result).map_err(|e| CliError::Numerical(format!("serializing result: {e}")))?;
        let mut doc = json!({ "command": self.command, "config": self.config, "result": result });
        if self.timestamp {
            doc["generated_at"] = json!(unix_seconds());
        }
        let mut text = serde_json::to_string_pretty(&doc).expect("values always serialize");
        text.push('\n');
        self.emit(text.as_bytes())
    }

    fn emit(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.out {
            Some(path) => write_atomic(path, bytes),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|e| CliError::Io(format!("stdout: {e}")))
            }
        }
    }
}

/// Writes to a temporary file in the target directory, then renames it into
/// place, so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Fails early when the output directory is missing, before any computation.
pub fn check_output_dir(out: &Option<PathBuf>) -> Result<(), CliError> {
    if let Some(path) = out {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        if !dir.is_dir() {
            return Err(CliError::Io(format!("output directory {} does not exist", dir.display())));
        }
        if path.is_dir() {
            return Err(CliError::Io(format!("{} is a directory", path.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_the_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        std::fs::write(&path, "old").unwrap();
        write_atomic(&path, b"new").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_directory_is_reported_before_work() {
        let err = check_output_dir(&Some(PathBuf::from("/definitely/not/here/x.json"))).unwrap_err();
        assert!(matches!(err, CliError::Io(_)));
        assert!(check_output_dir(&None).is_ok());
    }

    #[test]
    fn csv_preamble_without_timestamp() {
        let sink = Sink { command: "demo", config: json!({"a": 1}), out: None, timestamp: false };
        assert_eq!(sink.csv_preamble(), "# command=demo\n# config={\"a\":1}\n");
    }
}
