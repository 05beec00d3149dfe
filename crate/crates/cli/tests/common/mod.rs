#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use dualpath_cli::commands::{self, LABELS_FILE, STREAM_FILE};
use dualpath_cli::config::{GenDataSettings, ServeSettings, TrainVaeSettings};
use dualpath_core::codec::{read_jsonl, Transaction};
use dualpath_core::pipeline::DetectionService;
use tempfile::TempDir;

pub fn gen_settings(out: &Path) -> GenDataSettings {
    GenDataSettings {
        out_dir: out.to_path_buf(),
        length: 6_000,
        prevalence: 0.02,
        ..GenDataSettings::default()
    }
}

pub fn vae_settings(data: &Path, out: &Path) -> TrainVaeSettings {
    TrainVaeSettings {
        stream: data.join(STREAM_FILE),
        labels: data.join(LABELS_FILE),
        out_dir: out.to_path_buf(),
        epochs: 3,
        rows_per_epoch: 2_000,
        calibration_fraction: 0.3,
        background_size: 20,
        ..TrainVaeSettings::default()
    }
}

/// A small generated stream and a model trained on it, shared per test binary.
pub struct Fixture {
    _dir: TempDir,
    pub data: PathBuf,
    pub model: PathBuf,
}

impl Fixture {
    pub fn stream(&self) -> Vec<Transaction> {
        read_jsonl(&self.data.join(STREAM_FILE)).unwrap()
    }
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        let model = dir.path().join("model");
        commands::gen_data(&gen_settings(&data)).unwrap();
        commands::train_vae(&vae_settings(&data, &model)).unwrap();
        Fixture { _dir: dir, data, model }
    })
}

pub fn service(data_dir: &Path) -> Arc<DetectionService> {
    commands::start_service(&ServeSettings {
        model_dir: fixture().model.clone(),
        data_dir: data_dir.to_path_buf(),
        ..ServeSettings::default()
    })
    .unwrap()
}

pub fn anomalous(base: &Transaction, id: u64) -> Transaction {
    let mut t = base.clone();
    t.id = id;
    t.amount = 250_000.0;
    t.continuous[0] = t.amount;
    t.continuous[2] = -70.0;
    t.continuous[3] = 170.0;
    t
}
