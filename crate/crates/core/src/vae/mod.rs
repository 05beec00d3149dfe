//! Reconstruction-based anomaly scoring trained on legitimate traffic.

mod loss;
mod model;
mod threshold;
mod train;

pub use loss::{elbo_loss, kl_standard_normal, negative_elbo, ElboTargets, ElboTerms};
pub use model::{squared_distance, VaeArchitecture, VaeForward, VaeModel};
pub use threshold::{
    calibrate_from_errors, calibrate_threshold, nearest_rank_quantile, score, verdict, ScoreResult, ThresholdConfig,
    Verdict, DEFAULT_QUANTILE, MIN_CALIBRATION_SIZE,
};
pub use train::{
    evaluate_loss, fine_tune, train, EpochStats, FineTuneConfig, FineTuneData, SyntheticMode, TrainingReport,
    TrainingSet, VaeTrainConfig,
};
