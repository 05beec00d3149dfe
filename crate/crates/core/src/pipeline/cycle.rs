use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::snapshot::{Snapshot, SnapshotStore};
use super::unix_now;
use crate::codec::Transaction;
use crate::error::{Error, Result};
use crate::gan::{train_gan, AdversarialBuffer, GanTrainConfig, RealFraud, SynthesisReport};
use crate::shap::{BackgroundSet, DEFAULT_BACKGROUND_SIZE};
use crate::vae::{calibrate_threshold, fine_tune, FineTuneConfig, FineTuneData, TrainingReport};

/// Ids given to synthetic transactions start here, clear of simulator ids.
pub const SYNTHETIC_ID_BASE: u64 = 1 << 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CycleConfig {
    /// Unconsumed buffer entries that trigger a cycle.
    pub min_entries: usize,
    /// Wall-clock seconds after which a cycle runs regardless of the buffer.
    pub interval_secs: Option<f64>,
    pub gan: GanTrainConfig,
    pub synthetic_count: usize,
    pub fine_tune: FineTuneConfig,
    pub background_size: usize,
    /// Scheduler wake-up period.
    pub poll_secs: f64,
    /// Fault injection: abort when this stage (1..=6) starts.
    pub fail_at_stage: Option<u8>,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            min_entries: 50,
            interval_secs: None,
            gan: GanTrainConfig::default(),
            synthetic_count: 1_000,
            fine_tune: FineTuneConfig::default(),
            background_size: DEFAULT_BACKGROUND_SIZE,
            poll_secs: 1.0,
            fail_at_stage: None,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_entries == 0 {
            return Err(Error::contract("cycle trigger needs at least one buffer entry"));
        }
        if let Some(i) = self.interval_secs {
            if !(i > 0.0) {
                return Err(Error::contract("cycle interval must be positive"));
            }
        }
        if !(self.poll_secs > 0.0) {
            return Err(Error::contract("scheduler poll period must be positive"));
        }
        if self.background_size == 0 {
            return Err(Error::contract("background set must not be empty"));
        }
        Ok(())
    }

    /// Which trigger fires, if any.
    pub fn due(&self, unconsumed: usize, since_last: Duration) -> Option<Trigger> {
        if unconsumed >= self.min_entries {
            Some(Trigger::BufferDepth)
        } else if self.interval_secs.is_some_and(|i| since_last.as_secs_f64() >= i) {
            Some(Trigger::Interval)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    BufferDepth,
    Interval,
    Manual,
}

/// Reference data a cycle trains and recalibrates against.
#[derive(Clone, Debug, Default)]
pub struct CycleContext {
    pub legitimate: Arc<Vec<Transaction>>,
    pub calibration: Arc<Vec<Transaction>>,
    /// Simulator fraud for the synthesizer's cold start.
    pub seed_set: Arc<Vec<Transaction>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle: u64,
    pub trigger: Trigger,
    pub started_at: f64,
    pub duration_secs: f64,
    pub stage_secs: Vec<f64>,
    pub consumed: Vec<u64>,
    pub buffer_examples: usize,
    pub seed_examples: usize,
    pub false_positives: usize,
    pub synthetic_count: usize,
    /// Mean reconstruction error of the expansion set under the old and new detector.
    pub synthetic_mean_error_before: f64,
    pub synthetic_mean_error_after: f64,
    pub tau_before: f64,
    pub tau_after: f64,
    pub vae_version_before: u64,
    pub vae_version_after: u64,
    pub gan_version: u64,
    pub generation: u64,
    pub synthesis: SynthesisReport,
    pub fine_tune: TrainingReport,
}

impl CycleReport {
    /// Writes `cycle-NNNN-<unix>.json` into `dir` and returns the path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("cycle-{:04}-{}.json", self.cycle, self.started_at as u64));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

struct Stages {
    fail_at: Option<u8>,
    times: Vec<f64>,
    start: Instant,
}

impl Stages {
    fn run<T>(&mut self, stage: u8, f: impl FnOnce() -> Result<T>) -> Result<T> {
        if self.fail_at == Some(stage) {
            return Err(Error::CycleAborted {
                stage,
                reason: "injected fault".into(),
            });
        }
        let t = Instant::now();
        let out = f().map_err(|e| match e {
            e @ Error::CycleAborted { .. } => e,
            e => Error::CycleAborted {
                stage,
                reason: e.to_string(),
            },
        })?;
        self.times.push(t.elapsed().as_secs_f64());
        Ok(out)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// One asynchronous retraining cycle: adapt the synthesizer to the buffer,
/// synthesize an expansion set, fine-tune the detector on it plus the false
/// positives, recalibrate, then consume the buffer entries and publish the
/// new snapshot together. Returns `Ok(None)` when no trigger is due.
/// Any failure leaves the published snapshot and the buffer untouched.
pub fn run_retraining_cycle(
    store: &SnapshotStore,
    buffer: &AdversarialBuffer,
    false_positives: &[Transaction],
    ctx: &CycleContext,
    config: &CycleConfig,
    cycle: u64,
    trigger: Option<Trigger>,
) -> Result<Option<CycleReport>> {
    let Some(trigger) = trigger else {
        return Ok(None);
    };
    let entries = buffer.unconsumed();
    let started_at = unix_now();
    let mut stages = Stages {
        fail_at: config.fail_at_stage,
        times: Vec::new(),
        start: Instant::now(),
    };
    let old: Arc<Snapshot> = store.current();
    let codec = Arc::clone(&old.vae.codec);
    let buffered: Vec<Transaction> = entries.iter().map(|e| e.transaction.clone()).collect();

    let (gan, synthesis) = stages.run(1, || {
        let mut gan_config = config.gan.clone();
        gan_config.seed ^= cycle;
        train_gan(
            Arc::clone(&codec),
            RealFraud {
                buffer: &buffered,
                seed_set: &ctx.seed_set,
            },
            &gan_config,
            old.gan.as_ref(),
        )
    })?;

    let synthetic = stages.run(2, || {
        let first = SYNTHETIC_ID_BASE + cycle * config.synthetic_count as u64;
        gan.synthesize(config.synthetic_count, config.gan.seed ^ cycle.rotate_left(17), first)
    })?;

    let (vae, _, fine_tune_report) = stages.run(3, || {
        fine_tune(
            &old.vae,
            &old.threshold,
            &FineTuneData {
                legitimate: &ctx.legitimate,
                false_positives,
                synthetic_fraud: &synthetic,
                calibration: &ctx.calibration,
            },
            &config.fine_tune,
        )
    })?;

    let (threshold, background, before, after) = stages.run(4, || {
        let threshold = calibrate_threshold(&vae, &ctx.calibration, config.fine_tune.quantile)?;
        if !threshold.tau.is_finite() {
            return Err(Error::Calibration("recalibrated threshold is not finite".into()));
        }
        let background = BackgroundSet::sample(&vae, &ctx.calibration, config.background_size, cycle)?;
        let before = mean(&old.vae.score_transactions(&synthetic)?);
        let after = mean(&vae.score_transactions(&synthetic)?);
        Ok((threshold, background, before, after))
    })?;

    let ids = stages.run(5, || {
        let ids: Vec<u64> = entries.iter().map(|e| e.entry_id).collect();
        let still_open = buffer.unconsumed();
        if ids.iter().any(|id| !still_open.iter().any(|e| e.entry_id == *id)) {
            return Err(Error::Conflict("buffer entries consumed by another cycle".into()));
        }
        Ok(ids)
    })?;
    stages.run(6, || Ok(()))?;
    // consumption and publication commit together after the last fault point
    buffer.mark_consumed(&ids, cycle).map_err(|e| Error::CycleAborted {
        stage: 5,
        reason: e.to_string(),
    })?;
    let vae_version_after = vae.version();
    let tau_after = threshold.tau;
    let gan_version = gan.version();
    let generation = store.publish(Snapshot::new(vae, threshold, background, Some(gan)));

    Ok(Some(CycleReport {
        cycle,
        trigger,
        started_at,
        duration_secs: stages.start.elapsed().as_secs_f64(),
        stage_secs: stages.times,
        consumed: ids,
        buffer_examples: buffered.len(),
        seed_examples: ctx.seed_set.len(),
        false_positives: false_positives.len(),
        synthetic_count: synthetic.len(),
        synthetic_mean_error_before: before,
        synthetic_mean_error_after: after,
        tau_before: old.threshold.tau,
        tau_after,
        vae_version_before: old.vae.version(),
        vae_version_after,
        gan_version,
        generation,
        synthesis,
        fine_tune: fine_tune_report,
    }))
}
