use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n_steps: usize,
    pub horizon: f64,
}

/// Everything needed to reproduce a run's CSV outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Verbatim text of the config file.
    pub config: Option<String>,
    pub grid: Option<GridInfo>,
    pub seeds: Vec<u64>,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub status: String,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad manifest {}: {e}", path.display())))
    }

    /// The recorded arguments with `--config` pointed at `config` and
    /// `--out`/`--threads` dropped.
    pub fn replay_argv(&self, config: Option<&Path>) -> Vec<String> {
        let mut out = Vec::with_capacity(self.argv.len());
        let mut it = self.argv.iter();
        while let Some(a) = it.next() {
            match a.as_str() {
                "--out" | "--threads" => {
                    it.next();
                }
                "--config" => {
                    it.next();
                    if let Some(c) = config {
                        out.push("--config".into());
                        out.push(c.display().to_string());
                    }
                }
                s if s.starts_with("--out=") || s.starts_with("--threads=") => {}
                s if s.starts_with("--config=") => {
                    if let Some(c) = config {
                        out.push(format!("--config={}", c.display()));
                    }
                }
                _ => out.push(a.clone()),
            }
        }
        out
    }
}
