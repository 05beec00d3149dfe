use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::cycle::CycleConfig;
use crate::codec::Transaction;
use crate::error::{Error, Result};
use crate::shap::{ExplainConfig, Explanation};
use crate::vae::ScoreResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Approve,
    Block,
    PendingReview,
}

/// What happens to the payment itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Settlement {
    Released,
    Held,
    Declined,
}

/// Treatment of a transaction while its review is open.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingPolicy {
    #[default]
    Hold,
    ProvisionalApprove,
}

impl PendingPolicy {
    pub fn settlement(self) -> Settlement {
        match self {
            PendingPolicy::Hold => Settlement::Held,
            PendingPolicy::ProvisionalApprove => Settlement::Released,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub transaction_id: u64,
    pub action: Action,
    pub settlement: Settlement,
    /// `None` only when scoring failed and the transaction was routed to review.
    pub score: Option<ScoreResult>,
    /// Review item carrying the explanation; present iff flagged.
    pub review_item: Option<u64>,
    pub error: Option<String>,
    /// Unix seconds.
    pub decided_at: f64,
    pub latency_micros: f64,
    pub snapshot_generation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Open,
    ConfirmedFraud,
    FalsePositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewVerdict {
    ConfirmedFraud,
    FalsePositive,
}

impl std::str::FromStr for ReviewVerdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confirmed_fraud" | "confirmed-fraud" | "fraud" | "confirm" => Ok(ReviewVerdict::ConfirmedFraud),
            "false_positive" | "false-positive" | "reject" => Ok(ReviewVerdict::FalsePositive),
            other => Err(Error::contract(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: u64,
    pub transaction: Transaction,
    pub score: Option<ScoreResult>,
    pub explanation: Option<Explanation>,
    pub scoring_error: Option<String>,
    pub enqueued_at: f64,
    pub state: ReviewState,
    pub reviewer: Option<String>,
    pub resolved_at: Option<f64>,
    pub snapshot_generation: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub explanation_workers: usize,
    pub queue_capacity: usize,
    pub pending_policy: PendingPolicy,
    pub explain: ExplainConfig,
    pub cycle: CycleConfig,
    /// Event log, buffer, explanations and cycle reports live here; `None`
    /// keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    /// Recent latencies kept per path for the metrics endpoint.
    pub latency_window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            explanation_workers: 1,
            queue_capacity: 10_000,
            pending_policy: PendingPolicy::Hold,
            explain: ExplainConfig::default(),
            cycle: CycleConfig::default(),
            data_dir: None,
            latency_window: 10_000,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity == 0 {
            return Err(Error::contract("review queue capacity must be positive"));
        }
        if self.explanation_workers == 0 {
            return Err(Error::contract("explanation pool needs at least one worker"));
        }
        self.cycle.validate()
    }
}
