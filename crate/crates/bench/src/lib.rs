//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use dualpath_core::codec::{Codec, Transaction};
use dualpath_core::pipeline::{DetectionService, PipelineConfig, Snapshot, SnapshotStore};
use dualpath_core::shap::BackgroundSet;
use dualpath_core::sim::{default_schema, generate_stream, LabeledStream, StreamConfig};
use dualpath_core::vae::{calibrate_threshold, train, VaeModel, VaeTrainConfig};

pub struct Fixture {
    pub stream: LabeledStream,
    pub legit: Vec<Transaction>,
    pub fraud: Vec<Transaction>,
    pub codec: Arc<Codec>,
    pub snapshot: Snapshot,
}

impl Fixture {
    /// A 60k-row stream with a VAE trained briefly on its legitimate rows.
    pub fn build() -> Fixture {
        let (stream, _) = generate_stream(&StreamConfig {
            length: 60_000,
            ..StreamConfig::default()
        })
        .expect("stream");
        let mut legit = stream.legitimate();
        let calibration = legit.split_off(legit.len() - 4_000);
        let fraud = stream
            .iter()
            .filter(|(_, l)| l.is_fraud())
            .map(|(t, _)| t.clone())
            .collect();
        let codec = Arc::new(Codec::fit(default_schema(), &legit, 1).expect("codec"));
        let config = VaeTrainConfig {
            epochs: 3,
            rows_per_epoch: Some(8_192),
            ..VaeTrainConfig::default()
        };
        let (vae, _) = train(Arc::clone(&codec), &legit, &config).expect("training");
        let threshold = calibrate_threshold(&vae, &calibration, 0.995).expect("calibration");
        let background = BackgroundSet::sample(&vae, &calibration, 100, 5).expect("background");
        Fixture {
            stream,
            legit,
            fraud,
            codec,
            snapshot: Snapshot::new(vae, threshold, background, None),
        }
    }

    pub fn vae(&self) -> &VaeModel {
        &self.snapshot.vae
    }

    /// Rows the model scores above tau.
    pub fn flagged(&self) -> Vec<Transaction> {
        let tau = self.snapshot.threshold.tau;
        self.stream
            .transactions
            .iter()
            .filter(|t| self.vae().score_transaction(t).is_ok_and(|e| e > tau))
            .cloned()
            .collect()
    }

    pub fn service(&self) -> DetectionService {
        DetectionService::start(
            PipelineConfig::default(),
            Arc::new(SnapshotStore::new(self.snapshot.clone())),
        )
        .expect("service")
    }
}
