//! End-to-end detection runs over simulated traffic.
//!
//! An evaluation stream with injected fraud is generated first; a separate
//! fraud-free stream over the same accounts supplies training and calibration
//! rows, so the detector never sees the traffic it is scored on.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Codec, Transaction};
use crate::error::{Error, Result};
use crate::sim::{
    default_schema, evaluate, generate_stream, generate_stream_for, LabeledStream, LegitimateProfile, MetricsReport,
    Outcome, StreamConfig,
};
use crate::vae::{
    calibrate_threshold, train, ThresholdConfig, TrainingReport, VaeModel, VaeTrainConfig, DEFAULT_QUANTILE,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub stream: StreamConfig,
    /// Length of the fraud-free stream used for fitting and calibration.
    pub training_length: usize,
    pub training_seed: u64,
    /// Share of the fraud-free stream held out for threshold calibration.
    pub calibration_fraction: f64,
    pub quantile: f64,
    pub embedding_seed: u64,
    pub vae: VaeTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            stream: StreamConfig::default(),
            training_length: 100_000,
            training_seed: 101,
            calibration_fraction: 0.2,
            quantile: DEFAULT_QUANTILE,
            embedding_seed: 1,
            vae: VaeTrainConfig::default(),
        }
    }
}

/// Generated data for one run.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub eval: LabeledStream,
    pub profiles: Vec<LegitimateProfile>,
    pub fit: Vec<Transaction>,
    pub calibration: Vec<Transaction>,
    pub codec: Arc<Codec>,
}

impl ExperimentData {
    pub fn generate(config: &ExperimentConfig) -> Result<Self> {
        if !(config.calibration_fraction > 0.0 && config.calibration_fraction < 1.0) {
            return Err(Error::contract(format!(
                "calibration fraction {} outside (0, 1)",
                config.calibration_fraction
            )));
        }
        let (eval, profiles) = generate_stream(&config.stream)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.training_seed);
        let clean = generate_stream_for(&profiles, config.training_length, &[], 0.0, &mut rng)?;
        let mut legit = clean.legitimate();
        let n_cal = (legit.len() as f64 * config.calibration_fraction).round() as usize;
        let calibration = legit.split_off(legit.len() - n_cal);
        let codec = Arc::new(Codec::fit(default_schema(), &legit, config.embedding_seed)?);
        Ok(ExperimentData {
            eval,
            profiles,
            fit: legit,
            calibration,
            codec,
        })
    }
}

/// A trained and calibrated detector.
#[derive(Clone, Debug)]
pub struct Detector {
    pub model: VaeModel,
    pub threshold: ThresholdConfig,
    pub training: TrainingReport,
}

impl Detector {
    pub fn train(data: &ExperimentData, config: &ExperimentConfig) -> Result<Self> {
        let (model, training) = train(Arc::clone(&data.codec), &data.fit, &config.vae)?;
        let threshold = calibrate_threshold(&model, &data.calibration, config.quantile)?;
        Ok(Detector {
            model,
            threshold,
            training,
        })
    }

    /// Scores a labelled stream offline; flagged means `E > tau`.
    pub fn evaluate(&self, stream: &LabeledStream) -> Result<MetricsReport> {
        let scores = self.model.score_transactions(&stream.transactions)?;
        let outcomes: Vec<Outcome> = stream
            .transactions
            .iter()
            .zip(&scores)
            .map(|(t, &s)| Outcome {
                id: t.id,
                score: s,
                flagged: s > self.threshold.tau,
                blocked: None,
            })
            .collect();
        evaluate(&outcomes, &stream.labels)
    }
}
