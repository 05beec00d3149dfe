use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::service::DetectionService;
use super::types::Action;
use crate::codec::Transaction;
use crate::error::{Error, Result};
use crate::vae::nearest_rank_quantile;

/// Latency distribution of one decision path, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLatency {
    pub count: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    /// Extra requested percentiles as `(q, ms)`.
    pub percentiles: Vec<(f64, f64)>,
}

/// Summary of latencies given in microseconds; `None` when empty.
pub fn percentile_summary(micros: &[f64]) -> Option<PathLatency> {
    summarize(micros, &[])
}

fn summarize(micros: &[f64], extra: &[f64]) -> Option<PathLatency> {
    if micros.is_empty() {
        return None;
    }
    let q = |p: f64| nearest_rank_quantile(micros, p).map_or(f64::NAN, |v| v / 1e3);
    Some(PathLatency {
        count: micros.len(),
        p50_ms: q(0.50),
        p95_ms: q(0.95),
        p99_ms: q(0.99),
        max_ms: micros.iter().cloned().fold(0.0, f64::max) / 1e3,
        percentiles: extra.iter().map(|&p| (p, q(p))).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub transactions: usize,
    pub approve: Option<PathLatency>,
    /// Scoring plus enqueueing; explanation time is excluded.
    pub flag: Option<PathLatency>,
    pub flagged: usize,
    pub explanations: u64,
    pub explained_fraction: f64,
    pub approve_path_explanations: u64,
    pub backpressure_rejections: usize,
}

/// Streams `transactions` through the service, waits for the explanation
/// pool to drain, and reports per-path latency percentiles and the share of
/// traffic that was explained.
pub fn measure_latency(
    service: &DetectionService,
    transactions: &[Transaction],
    percentiles: &[f64],
) -> Result<LatencyReport> {
    if transactions.is_empty() {
        return Err(Error::Evaluation("latency report over an empty stream".into()));
    }
    if let Some(p) = percentiles.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::contract(format!("percentile {p} outside (0, 1]")));
    }
    let explained_before = service.metrics().explained;
    let approve_path_before = service.metrics().approve_path_explanations;
    let mut approve = Vec::new();
    let mut flag = Vec::new();
    let mut rejected = 0;
    for t in transactions {
        match service.process_transaction(t) {
            Ok(d) if d.action == Action::Approve => approve.push(d.latency_micros),
            Ok(d) => flag.push(d.latency_micros),
            Err(Error::Backpressure(_)) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    service.drain(Duration::from_secs(600));
    let m = service.metrics();
    let explanations = m.explained - explained_before;
    Ok(LatencyReport {
        transactions: transactions.len(),
        approve: summarize(&approve, percentiles),
        flag: summarize(&flag, percentiles),
        flagged: flag.len(),
        explanations,
        explained_fraction: explanations as f64 / transactions.len() as f64,
        approve_path_explanations: m.approve_path_explanations - approve_path_before,
        backpressure_rejections: rejected,
    })
}
