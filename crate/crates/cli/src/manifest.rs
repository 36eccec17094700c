use dhevo_core::io::{self, IoError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA: u32 = 1;

/// What a command was run with and what it wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config: Value,
    pub seed: u64,
    pub parallel: bool,
    pub instance_hashes: Vec<String>,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start(command: &str, config: Value, seed: u64) -> Self {
        RunManifest {
            schema_version: MANIFEST_SCHEMA,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seed,
            parallel: dhevo_core::parallel::is_parallel(),
            instance_hashes: Vec::new(),
            started: now(),
            finished: String::new(),
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, IoError> {
        self.finished = now();
        let path = dir.join("manifest.json");
        io::save_json(&path, &self)?;
        Ok(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
