use std::sync::Arc;

use parking_lot::RwLock;

use crate::gan::GanModel;
use crate::shap::BackgroundSet;
use crate::vae::{ThresholdConfig, VaeModel};

/// Everything the scoring and explanation paths read, published as one unit.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub vae: VaeModel,
    pub threshold: ThresholdConfig,
    pub background: BackgroundSet,
    pub gan: Option<GanModel>,
    /// Bumped by every publication.
    pub generation: u64,
}

impl Snapshot {
    pub fn new(vae: VaeModel, threshold: ThresholdConfig, background: BackgroundSet, gan: Option<GanModel>) -> Self {
        Snapshot {
            vae,
            threshold,
            background,
            gan,
            generation: 0,
        }
    }

    pub fn gan_version(&self) -> Option<u64> {
        self.gan.as_ref().map(|g| g.version())
    }
}

/// Atomic holder of the current snapshot. Readers clone an `Arc` and keep a
/// consistent view for as long as they hold it.
#[derive(Debug)]
pub struct SnapshotStore {
    current: RwLock<Arc<Snapshot>>,
}

impl SnapshotStore {
    pub fn new(snapshot: Snapshot) -> Self {
        SnapshotStore {
            current: RwLock::new(Arc::new(snapshot)),
        }
    }

    pub fn current(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read())
    }

    /// Swaps in `snapshot` with the next generation number and returns it.
    pub fn publish(&self, mut snapshot: Snapshot) -> u64 {
        let mut slot = self.current.write();
        snapshot.generation = slot.generation + 1;
        let generation = snapshot.generation;
        *slot = Arc::new(snapshot);
        generation
    }
}
