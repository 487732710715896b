use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, Result};

/// Output directory of one command. Reports written here depend only on
/// the config and inputs; wall-clock times go to `run.log` alone.
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::output(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(cfu_core::Error::from)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<()> {
        let mut text = String::new();
        for r in records {
            text.push_str(&serde_json::to_string(r).map_err(cfu_core::Error::from)?);
            text.push('\n');
        }
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(cfu_core::Error::from)?;
        for r in rows {
            w.serialize(r).map_err(cfu_core::Error::from)?;
        }
        w.flush().map_err(|e| CliError::output(&path, e))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::output(&path, e))
    }

    /// Append a timestamped line to `run.log`.
    pub fn log(&self, message: &str) -> Result<()> {
        let path = self.path("run.log");
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::output(&path, e))?;
        writeln!(f, "{secs:.3} {message}").map_err(|e| CliError::output(&path, e))
    }
}
