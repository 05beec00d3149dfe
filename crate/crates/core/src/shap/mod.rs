//! Field-level Shapley attributions of the reconstruction-error score.

mod game;
mod vae_value;

pub use game::{explain_exact, explain_sampled, shapley_weight, FnGame, Game, MAX_EXACT_PLAYERS};
pub use vae_value::{explain_transaction, BackgroundSet, ExplainConfig, VaeValueFunction, DEFAULT_BACKGROUND_SIZE};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sampled,
}

/// Attribution record for one flagged transaction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub transaction_id: u64,
    pub feature_names: Vec<String>,
    pub attributions: Vec<f64>,
    /// Value of the empty coalition (mean score over the background).
    pub base_value: f64,
    /// Value of the full coalition (the score being explained).
    pub model_output: f64,
    pub method: Method,
    /// Permutations drawn, for the sampled method.
    pub samples: Option<usize>,
    /// Largest per-field 95% half-width before renormalisation, sampled only.
    pub confidence_bound: Option<f64>,
    pub compute_micros: f64,
    pub model_version: u64,
}

impl Explanation {
    /// `base + sum(phi) - output`; zero when efficiency holds.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.attributions.iter().sum::<f64>() - self.model_output
    }

    pub fn attribution(&self, field: &str) -> Option<f64> {
        self.feature_names
            .iter()
            .position(|n| n == field)
            .map(|i| self.attributions[i])
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join(format!("{}.json", self.transaction_id)),
            serde_json::to_string_pretty(self)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, transaction_id: u64) -> Result<Self> {
        let raw = std::fs::read_to_string(dir.join(format!("{transaction_id}.json")))?;
        Ok(serde_json::from_str(&raw)?)
    }
}
