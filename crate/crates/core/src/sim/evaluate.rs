use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stream::{Label, LabelRecord, Scenario};
use crate::error::{Error, Result};

/// What the system did with one transaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u64,
    /// Anomaly score; higher is more suspicious.
    pub score: f64,
    /// Routed to review.
    pub flagged: bool,
    /// Final customer-facing result after review (`None` while pending).
    pub blocked: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    fn add(&mut self, fraud: bool, positive: bool) {
        match (fraud, positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.r#fn += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub count: usize,
    pub detected: usize,
    pub recall: f64,
    /// Precision against this scenario plus all legitimate traffic.
    pub precision: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Flagging decisions (score above threshold).
    pub detection: Confusion,
    /// Final outcomes after review; pending items count as not blocked.
    pub final_outcome: Confusion,
    pub per_scenario: BTreeMap<String, ScenarioMetrics>,
    pub auroc: f64,
    pub recall: f64,
    pub precision: f64,
    pub fpr: f64,
}

impl MetricsReport {
    pub fn scenario(&self, s: Scenario) -> Option<&ScenarioMetrics> {
        self.per_scenario.get(s.as_str())
    }

    /// Plain-text table of per-scenario recall.
    pub fn recall_table(&self) -> String {
        let mut out = format!("{:<14} {:>7} {:>9} {:>8}\n", "scenario", "count", "detected", "recall");
        for (name, m) in &self.per_scenario {
            out.push_str(&format!(
                "{name:<14} {:>7} {:>9} {:>8.4}\n",
                m.count, m.detected, m.recall
            ));
        }
        out.push_str(&format!(
            "overall recall {:.4}  precision {:.4}  fpr {:.5}  auroc {:.4}\n",
            self.recall, self.precision, self.fpr, self.auroc
        ));
        out
    }
}

/// Scores outcomes against ground truth. Every outcome id must have a label.
pub fn evaluate(outcomes: &[Outcome], truth: &[LabelRecord]) -> Result<MetricsReport> {
    let labels: HashMap<u64, Label> = truth.iter().map(|r| (r.id, r.label)).collect();
    let mut detection = Confusion::default();
    let mut final_outcome = Confusion::default();
    let mut per: BTreeMap<Scenario, (usize, usize)> = BTreeMap::new();
    let mut scored = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let label = *labels
            .get(&o.id)
            .ok_or_else(|| Error::Evaluation(format!("no ground truth for transaction {}", o.id)))?;
        detection.add(label.is_fraud(), o.flagged);
        final_outcome.add(label.is_fraud(), o.blocked.unwrap_or(false));
        if let Label::Fraud(s) = label {
            let e = per.entry(s).or_default();
            e.0 += 1;
            e.1 += o.flagged as usize;
        }
        scored.push((o.score, label.is_fraud()));
    }
    let per_scenario = per
        .into_iter()
        .map(|(s, (count, detected))| {
            let m = ScenarioMetrics {
                count,
                detected,
                recall: ratio(detected, count),
                precision: ratio(detected, detected + detection.fp),
                fpr: detection.fpr(),
            };
            (s.as_str().to_string(), m)
        })
        .collect();
    Ok(MetricsReport {
        auroc: auroc(&scored),
        recall: detection.recall(),
        precision: detection.precision(),
        fpr: detection.fpr(),
        detection,
        final_outcome,
        per_scenario,
    })
}

/// Area under the ROC curve via the rank-sum statistic with averaged ties.
/// Returns 0.5 when either class is absent.
pub fn auroc(scored: &[(f64, bool)]) -> f64 {
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * sorted[i..=j].iter().filter(|s| s.1).count() as f64;
        i = j + 1;
    }
    (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64)
}

/// Resolves reviews from ground truth, flipping a configurable fraction.
#[derive(Debug)]
pub struct OracleReviewer {
    labels: HashMap<u64, Label>,
    error_rate: f64,
    rng: ChaCha8Rng,
    pub reviewer_id: String,
}

impl OracleReviewer {
    pub fn new(truth: &[LabelRecord], error_rate: f64, seed: u64) -> Self {
        OracleReviewer {
            labels: truth.iter().map(|r| (r.id, r.label)).collect(),
            error_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            reviewer_id: "oracle".into(),
        }
    }

    pub fn extend(&mut self, truth: &[LabelRecord]) {
        self.labels.extend(truth.iter().map(|r| (r.id, r.label)));
    }

    /// `true` when the reviewer confirms fraud.
    pub fn confirms_fraud(&mut self, id: u64) -> Result<bool> {
        let label = self
            .labels
            .get(&id)
            .ok_or_else(|| Error::Evaluation(format!("reviewer has no label for {id}")))?;
        let flip = self.error_rate > 0.0 && self.rng.random_bool(self.error_rate.min(1.0));
        Ok(label.is_fraud() != flip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Vec<LabelRecord> {
        let mut v: Vec<LabelRecord> = (0..1000)
            .map(|id| LabelRecord {
                id,
                label: Label::Legitimate,
            })
            .collect();
        v[10].label = Label::Fraud(Scenario::Salami);
        v[20].label = Label::Fraud(Scenario::Ato);
        v
    }

    #[test]
    fn all_approve_baseline() {
        let t = truth();
        let outs: Vec<Outcome> = t
            .iter()
            .map(|r| Outcome {
                id: r.id,
                score: 0.0,
                flagged: false,
                blocked: Some(false),
            })
            .collect();
        let m = evaluate(&outs, &t).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.auroc, 0.5);
    }

    #[test]
    fn oracle_detector_is_perfect() {
        let t = truth();
        let outs: Vec<Outcome> = t
            .iter()
            .map(|r| Outcome {
                id: r.id,
                score: r.label.is_fraud() as u8 as f64,
                flagged: r.label.is_fraud(),
                blocked: Some(r.label.is_fraud()),
            })
            .collect();
        let m = evaluate(&outs, &t).unwrap();
        assert_eq!((m.precision, m.recall, m.auroc), (1.0, 1.0, 1.0));
        assert_eq!(m.scenario(Scenario::Salami).unwrap().recall, 1.0);
    }

    #[test]
    fn unknown_id_is_error() {
        let outs = [Outcome {
            id: 5000,
            score: 0.0,
            flagged: false,
            blocked: None,
        }];
        assert!(matches!(evaluate(&outs, &truth()), Err(Error::Evaluation(_))));
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let data = [
            (0.1, false),
            (0.4, true),
            (0.35, false),
            (0.8, true),
            (0.4, false),
            (0.2, true),
        ];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for a in data.iter().filter(|d| d.1) {
            for b in data.iter().filter(|d| !d.1) {
                pairs += 1.0;
                wins += if a.0 > b.0 {
                    1.0
                } else if a.0 == b.0 {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert!((auroc(&data) - wins / pairs).abs() < 1e-15);
    }
}
