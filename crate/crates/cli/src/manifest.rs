use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, written beside its outputs. The resolved
/// settings plus seeds and inputs are enough to repeat the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    /// Settings after merging defaults, config file and flags.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub versions: BTreeMap<String, String>,
    pub started_at: f64,
    pub wall_clock_secs: f64,
    /// Anything command-specific worth keeping, e.g. headline metrics.
    pub summary: serde_json::Value,
}

/// Accumulates a manifest while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn start<C: Serialize>(command: &str, config: &C) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("dualpath-cli".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("dualpath-core".into(), dualpath_core::VERSION.into());
        versions.insert(
            "transaction-schema".into(),
            dualpath_core::codec::SCHEMA_VERSION.to_string(),
        );
        ManifestBuilder {
            manifest: RunManifest {
                command: command.into(),
                argv: std::env::args().collect(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                versions,
                started_at: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0.0, |d| d.as_secs_f64()),
                wall_clock_secs: 0.0,
                summary: serde_json::Value::Null,
            },
            clock: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.manifest.seeds.insert(name.into(), value);
        self
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.manifest.inputs.push(path.into());
        self
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.manifest.outputs.push(path.into());
        self
    }

    pub fn summary(&mut self, value: serde_json::Value) -> &mut Self {
        self.manifest.summary = value;
        self
    }

    /// Stamps the wall clock and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> CliResult<RunManifest> {
        self.manifest.wall_clock_secs = self.clock.elapsed().as_secs_f64();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)?)?;
        Ok(self.manifest)
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
