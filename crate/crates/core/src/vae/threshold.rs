use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model::VaeModel;
use crate::codec::Transaction;
use crate::error::{Error, Result};

pub const DEFAULT_QUANTILE: f64 = 0.995;
pub const MIN_CALIBRATION_SIZE: usize = 1_000;

/// Anomaly threshold and how it was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub tau: f64,
    pub quantile: f64,
    pub calibration_size: usize,
    pub model_version: u64,
}

impl ThresholdConfig {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Nearest-rank quantile: the smallest value with at least `q * n` values at
/// or below it.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(q > 0.0 && q <= 1.0) {
        return Err(Error::Calibration(format!(
            "quantile {q} of {} values is undefined",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Sets the threshold to the `quantile` of reconstruction errors over a
/// legitimate calibration set of at least 1000 transactions.
pub fn calibrate_threshold(model: &VaeModel, calibration: &[Transaction], quantile: f64) -> Result<ThresholdConfig> {
    if calibration.len() < MIN_CALIBRATION_SIZE {
        return Err(Error::Calibration(format!(
            "calibration set has {} transactions, need at least {MIN_CALIBRATION_SIZE}",
            calibration.len()
        )));
    }
    let errors = model.score_transactions(calibration)?;
    calibrate_from_errors(&errors, quantile, model.version())
}

pub fn calibrate_from_errors(errors: &[f64], quantile: f64, model_version: u64) -> Result<ThresholdConfig> {
    Ok(ThresholdConfig {
        tau: nearest_rank_quantile(errors, quantile)?,
        quantile,
        calibration_size: errors.len(),
        model_version,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Anomalous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub transaction_id: u64,
    pub reconstruction_error: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    pub latency_micros: f64,
    pub model_version: u64,
}

/// Strictly greater than the threshold is anomalous.
pub fn verdict(error: f64, tau: f64) -> Verdict {
    if error > tau {
        Verdict::Anomalous
    } else {
        Verdict::Normal
    }
}

/// Scores one transaction: encode, one encoder pass, one decoder pass.
pub fn score(model: &VaeModel, threshold: &ThresholdConfig, t: &Transaction) -> Result<ScoreResult> {
    let start = Instant::now();
    let error = model.score_transaction(t)?;
    let latency_micros = (start.elapsed().as_nanos() as f64 / 1_000.0).max(1e-3);
    Ok(ScoreResult {
        transaction_id: t.id,
        reconstruction_error: error,
        threshold: threshold.tau,
        verdict: verdict(error, threshold.tau),
        latency_micros,
        model_version: model.version(),
    })
}
