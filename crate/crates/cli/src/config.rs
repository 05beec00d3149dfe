//! Resolved settings per subcommand. Values come from defaults, then the
//! TOML config file's section for the command, then command-line flags.

use std::path::{Path, PathBuf};

use dualpath_core::pipeline::PendingPolicy;
use dualpath_core::sim::DEFAULT_PREVALENCE;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub gen_data: GenDataSettings,
    pub train_vae: TrainVaeSettings,
    pub train_gan: TrainGanSettings,
    pub serve: ServeSettings,
    pub simulate: SimulateSettings,
    pub explain: ExplainSettings,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataSettings {
    pub out_dir: PathBuf,
    pub length: usize,
    pub accounts: usize,
    pub seed: u64,
    /// Injected scenarios; empty for fraud-free traffic.
    pub scenarios: Vec<String>,
    /// Pooled fraud prevalence, split evenly over the scenarios.
    pub prevalence: f64,
    /// Reuse the accounts of an earlier run instead of drawing new ones.
    pub profiles: Option<PathBuf>,
    /// First id assigned in the stream.
    pub id_offset: u64,
}

impl Default for GenDataSettings {
    fn default() -> Self {
        GenDataSettings {
            out_dir: "data".into(),
            length: 100_000,
            accounts: 20,
            seed: 17,
            scenarios: vec!["salami".into(), "cnp_velocity".into(), "ato".into()],
            prevalence: DEFAULT_PREVALENCE,
            profiles: None,
            id_offset: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainVaeSettings {
    pub stream: PathBuf,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub rows_per_epoch: usize,
    pub batch_size: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub calibration_fraction: f64,
    pub quantile: f64,
    pub background_size: usize,
    pub seed: u64,
    pub embedding_seed: u64,
}

impl Default for TrainVaeSettings {
    fn default() -> Self {
        TrainVaeSettings {
            stream: "data/stream.jsonl".into(),
            labels: "data/labels.jsonl".into(),
            out_dir: "model".into(),
            epochs: 40,
            rows_per_epoch: 32_768,
            batch_size: 128,
            latent_dim: 3,
            hidden: 64,
            hidden_layers: 2,
            calibration_fraction: 0.2,
            quantile: 0.995,
            background_size: 100,
            seed: 7,
            embedding_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainGanSettings {
    pub stream: PathBuf,
    pub labels: PathBuf,
    /// Directory written by `train-vae`; its codec defines the feature layout.
    pub model_dir: PathBuf,
    /// Defaults to `<model_dir>/gan`.
    pub out_dir: Option<PathBuf>,
    /// Restrict the seed set to these scenarios; empty takes all fraud.
    pub scenarios: Vec<String>,
    /// Adversarial buffer file (`buffer.jsonl` from a service data dir).
    pub buffer: Option<PathBuf>,
    pub generator_steps: usize,
    pub n_critic: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for TrainGanSettings {
    fn default() -> Self {
        TrainGanSettings {
            stream: "data/stream.jsonl".into(),
            labels: "data/labels.jsonl".into(),
            model_dir: "model".into(),
            out_dir: None,
            scenarios: Vec::new(),
            buffer: None,
            generator_steps: 1_000,
            n_critic: 5,
            batch_size: 32,
            lambda: 10.0,
            seed: 23,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub model_dir: PathBuf,
    pub data_dir: PathBuf,
    pub bind: String,
    pub explanation_workers: usize,
    pub queue_capacity: usize,
    pub pending_policy: PendingPolicy,
    /// Run the background retraining scheduler.
    pub retrain: bool,
    pub min_entries: usize,
    pub interval_secs: Option<f64>,
    /// Labelled stream whose fraud rows seed the synthesizer.
    pub seed_stream: Option<PathBuf>,
    pub seed_labels: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        ServeSettings {
            model_dir: "model".into(),
            data_dir: "service-data".into(),
            bind: "127.0.0.1:8080".into(),
            explanation_workers: 1,
            queue_capacity: 10_000,
            pending_policy: PendingPolicy::Hold,
            retrain: false,
            min_entries: 50,
            interval_secs: None,
            seed_stream: None,
            seed_labels: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub model_dir: PathBuf,
    pub stream: PathBuf,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    /// Persist the embedded service's log and buffer here.
    pub data_dir: Option<PathBuf>,
    pub reviewer_error: f64,
    pub reviewer_seed: u64,
    pub pending_policy: PendingPolicy,
    pub explanation_workers: usize,
    /// After reviews, run one retraining cycle seeded by the stream's fraud.
    pub cycle: bool,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        SimulateSettings {
            model_dir: "model".into(),
            stream: "data/stream.jsonl".into(),
            labels: "data/labels.jsonl".into(),
            out_dir: "sim-out".into(),
            data_dir: None,
            reviewer_error: 0.0,
            reviewer_seed: 7,
            pending_policy: PendingPolicy::Hold,
            explanation_workers: 1,
            cycle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub model_dir: PathBuf,
    /// Service data dir to look the transaction up in.
    pub data_dir: Option<PathBuf>,
    /// Stream file to take the transaction from when it was never served.
    pub stream: Option<PathBuf>,
    pub json: bool,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            model_dir: "model".into(),
            data_dir: None,
            stream: None,
            json: false,
        }
    }
}

/// Overwrites `target` when the flag was given.
pub fn set<T>(target: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *target = v;
    }
}
