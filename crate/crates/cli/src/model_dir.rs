//! On-disk layout of a trained model directory.
//!
//! ```text
//! <dir>/vae/                 VAE checkpoint and codec
//! <dir>/threshold.json       calibrated tau
//! <dir>/training-report.json
//! <dir>/background.jsonl     Shapley background rows
//! <dir>/reference/           legitimate and calibration rows for retraining
//! <dir>/gan/                 synthesizer, once trained
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use dualpath_core::codec::{read_jsonl, Transaction};
use dualpath_core::gan::GanModel;
use dualpath_core::pipeline::{CycleContext, Snapshot};
use dualpath_core::shap::BackgroundSet;
use dualpath_core::vae::{ThresholdConfig, VaeModel};

use crate::error::{CliError, CliResult, Context};

pub struct ModelDir {
    pub root: PathBuf,
}

impl ModelDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ModelDir { root: root.into() }
    }

    pub fn vae(&self) -> PathBuf {
        self.root.join("vae")
    }

    pub fn threshold(&self) -> PathBuf {
        self.root.join("threshold.json")
    }

    pub fn training_report(&self) -> PathBuf {
        self.root.join("training-report.json")
    }

    pub fn background(&self) -> PathBuf {
        self.root.join("background.jsonl")
    }

    pub fn legitimate(&self) -> PathBuf {
        self.root.join("reference").join("legitimate.jsonl")
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("reference").join("calibration.jsonl")
    }

    pub fn gan(&self) -> PathBuf {
        self.root.join("gan")
    }

    fn require(&self, path: &Path) -> CliResult<()> {
        if path.exists() {
            Ok(())
        } else {
            Err(CliError::data(format!(
                "missing {} (run train-vae first?)",
                path.display()
            )))
        }
    }

    pub fn load_vae(&self) -> CliResult<VaeModel> {
        self.require(&self.vae())?;
        VaeModel::load(&self.vae()).context(format!("loading {}", self.vae().display()))
    }

    pub fn load_threshold(&self) -> CliResult<ThresholdConfig> {
        self.require(&self.threshold())?;
        ThresholdConfig::load(&self.threshold()).context(format!("loading {}", self.threshold().display()))
    }

    pub fn load_gan(&self) -> CliResult<Option<GanModel>> {
        if !self.gan().join("generator.ckpt").exists() {
            return Ok(None);
        }
        GanModel::load(&self.gan())
            .map(Some)
            .context(format!("loading {}", self.gan().display()))
    }

    /// Everything the scoring and explanation paths need.
    pub fn load_snapshot(&self) -> CliResult<Snapshot> {
        let vae = self.load_vae()?;
        let threshold = self.load_threshold()?;
        self.require(&self.background())?;
        let rows: Vec<Transaction> = read_jsonl(&self.background()).context("reading background set")?;
        let background = BackgroundSet::new(&vae, rows).context("building background set")?;
        let gan = self.load_gan()?;
        Ok(Snapshot::new(vae, threshold, background, gan))
    }

    pub fn load_context(&self, seed_set: Vec<Transaction>) -> CliResult<CycleContext> {
        self.require(&self.legitimate())?;
        self.require(&self.calibration())?;
        Ok(CycleContext {
            legitimate: Arc::new(read_jsonl(&self.legitimate()).context("reading reference rows")?),
            calibration: Arc::new(read_jsonl(&self.calibration()).context("reading calibration rows")?),
            seed_set: Arc::new(seed_set),
        })
    }
}
