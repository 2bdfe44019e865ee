//! Atomic writes and provenance sidecars.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &str, bytes: &[u8]) -> CliResult<()> {
    let io_err = |e: std::io::Error| CliError::io(format!("{path}: {e}"));
    let dir = Path::new(path).parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub struct Provenance {
    pub subcommand: &'static str,
    pub config: Value,
    pub seed: Option<u64>,
}

impl Provenance {
    /// Writes `bytes` to `path` and the sidecar to `path.meta.json`.
    pub fn write(&self, path: &str, bytes: &[u8]) -> CliResult<()> {
        write_atomic(path, bytes)?;
        let meta = json!({
            "tool": "lpq",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": self.subcommand,
            "seed": self.seed,
            "config": self.config,
        });
        let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes") + "\n";
        write_atomic(&format!("{path}.meta.json"), text.as_bytes())
    }

    /// Writes to `path` when given, else prints to stdout.
    pub fn emit(&self, path: Option<&str>, bytes: &[u8]) -> CliResult<()> {
        match path {
            Some(p) => self.write(p, bytes),
            None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io(format!("stdout: {e}"))),
        }
    }
}
