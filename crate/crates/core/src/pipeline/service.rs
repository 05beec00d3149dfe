use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::cycle::{run_retraining_cycle, CycleConfig, CycleContext, CycleReport, Trigger};
use super::events::{EventKind, EventLog, ReplayedState};
use super::latency::{percentile_summary, PathLatency};
use super::snapshot::{Snapshot, SnapshotStore};
use super::types::{Action, Decision, PipelineConfig, ReviewItem, ReviewState, ReviewVerdict, Settlement};
use super::{lower_thread_priority, nice_thread, unix_now};
use crate::codec::Transaction;
use crate::error::{Error, Result};
use crate::gan::AdversarialBuffer;
use crate::shap::{explain_transaction, Explanation};
use crate::vae::{score, ScoreResult, Verdict};

#[derive(Debug, Default)]
pub struct Counters {
    pub processed: AtomicU64,
    pub approved: AtomicU64,
    pub flagged: AtomicU64,
    pub scoring_errors: AtomicU64,
    pub explained: AtomicU64,
    pub explanation_failures: AtomicU64,
    /// Explanations computed for transactions that were approved; must stay 0.
    pub approve_path_explanations: AtomicU64,
    pub blocked: AtomicU64,
    pub false_positives: AtomicU64,
    pub backpressure_rejections: AtomicU64,
    pub cycles_completed: AtomicU64,
    pub cycles_aborted: AtomicU64,
}

fn get(c: &AtomicU64) -> u64 {
    c.load(Ordering::SeqCst)
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::SeqCst);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub processed: u64,
    pub approved: u64,
    pub flagged: u64,
    pub scoring_errors: u64,
    pub explained: u64,
    pub explanation_failures: u64,
    pub approve_path_explanations: u64,
    pub pending_explanations: usize,
    pub blocked: u64,
    pub false_positives: u64,
    pub backpressure_rejections: u64,
    pub open_reviews: usize,
    /// Unconsumed adversarial buffer entries.
    pub buffer_depth: usize,
    pub buffer_total: usize,
    pub fp_set_size: usize,
    pub explained_fraction: f64,
    pub approve_latency: Option<PathLatency>,
    pub flag_latency: Option<PathLatency>,
    pub vae_version: u64,
    pub gan_version: Option<u64>,
    pub generation: u64,
    pub tau: f64,
    pub cycles_completed: u64,
    pub cycles_aborted: u64,
    pub events: usize,
}

#[derive(Default)]
struct State {
    items: BTreeMap<u64, ReviewItem>,
    by_transaction: HashMap<u64, u64>,
    false_positives: Vec<Transaction>,
    next_item: u64,
    open: usize,
}

struct LatencyWindow {
    cap: usize,
    approve: VecDeque<f64>,
    flag: VecDeque<f64>,
}

impl LatencyWindow {
    fn push(&mut self, approve: bool, micros: f64) {
        let q = if approve { &mut self.approve } else { &mut self.flag };
        if q.len() == self.cap {
            q.pop_front();
        }
        q.push_back(micros);
    }
}

struct CycleState {
    next: u64,
    last: Instant,
}

struct Job {
    item_id: u64,
    snapshot: Arc<Snapshot>,
    transaction: Transaction,
}

struct Shared {
    config: PipelineConfig,
    store: Arc<SnapshotStore>,
    log: EventLog,
    buffer: AdversarialBuffer,
    state: Mutex<State>,
    counters: Counters,
    latencies: Mutex<LatencyWindow>,
    pending: AtomicUsize,
    cycle: Mutex<CycleState>,
    explanations_dir: Option<PathBuf>,
    reports_dir: Option<PathBuf>,
}

impl Shared {
    fn explain(&self, job: Job) {
        let result = explain_transaction(
            &job.snapshot.vae,
            &job.snapshot.background,
            &job.transaction,
            &self.config.explain,
        );
        let mut state = self.state.lock();
        let approved = state
            .items
            .get(&job.item_id)
            .and_then(|i| i.score.as_ref())
            .is_none_or(|s| s.verdict == Verdict::Normal);
        let outcome = match result {
            Ok(e) => {
                if approved {
                    bump(&self.counters.approve_path_explanations);
                }
                if let Some(dir) = &self.explanations_dir {
                    let _ = e.save(dir);
                }
                if let Some(item) = state.items.get_mut(&job.item_id) {
                    item.explanation = Some(e.clone());
                }
                bump(&self.counters.explained);
                self.log.append(
                    unix_now(),
                    EventKind::Explained {
                        item_id: job.item_id,
                        explanation: e,
                    },
                )
            }
            Err(err) => {
                bump(&self.counters.explanation_failures);
                self.log.append(
                    unix_now(),
                    EventKind::ExplanationFailed {
                        item_id: job.item_id,
                        reason: err.to_string(),
                    },
                )
            }
        };
        drop(state);
        let _ = outcome;
        self.pending.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Scores transactions against the published snapshot, routes anomalies to
/// the review queue with explanations computed by a background pool, and
/// feeds review verdicts to the adversarial buffer or the false-positive set.
pub struct DetectionService {
    shared: Arc<Shared>,
    sender: RwLock<Option<Sender<Job>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

impl std::fmt::Debug for DetectionService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DetectionService")
            .field("generation", &self.shared.store.current().generation)
            .finish()
    }
}

impl DetectionService {
    /// Starts a service over `store`. With a data directory the event log and
    /// buffer are reopened and the queue is rebuilt from the log; open items
    /// still missing an explanation are explained again.
    pub fn start(config: PipelineConfig, store: Arc<SnapshotStore>) -> Result<Self> {
        config.validate()?;
        let (log, buffer, explanations_dir, reports_dir) = match &config.data_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                (
                    EventLog::open(&dir.join("events.jsonl"))?,
                    AdversarialBuffer::open(&dir.join("buffer.jsonl"))?,
                    Some(dir.join("explanations")),
                    Some(dir.join("reports")),
                )
            }
            None => (EventLog::in_memory(), AdversarialBuffer::in_memory(), None, None),
        };
        let replayed = log.replay()?;
        let entries = buffer.entries();
        if entries.len() < replayed.buffer.len() || entries[..replayed.buffer.len()] != replayed.buffer[..] {
            return Err(Error::contract("adversarial buffer disagrees with the event log"));
        }
        let counters = Counters::default();
        counters.processed.store(replayed.scored, Ordering::SeqCst);
        counters.approved.store(replayed.approved, Ordering::SeqCst);
        counters.flagged.store(replayed.flagged, Ordering::SeqCst);
        counters.explained.store(replayed.explained, Ordering::SeqCst);
        counters.cycles_completed.store(replayed.cycles, Ordering::SeqCst);
        let mut state = State {
            next_item: replayed.items.keys().next_back().map_or(0, |k| k + 1),
            open: replayed.open_items().count(),
            false_positives: replayed.false_positives.clone(),
            ..State::default()
        };
        for item in replayed.items.values() {
            state.by_transaction.insert(item.transaction.id, item.item_id);
        }
        let unexplained: Vec<(u64, Transaction)> = replayed
            .open_items()
            .filter(|i| i.score.is_some() && i.explanation.is_none())
            .map(|i| (i.item_id, i.transaction.clone()))
            .collect();
        state.items = replayed.items;
        let shared = Arc::new(Shared {
            latencies: Mutex::new(LatencyWindow {
                cap: config.latency_window.max(1),
                approve: VecDeque::new(),
                flag: VecDeque::new(),
            }),
            cycle: Mutex::new(CycleState {
                next: replayed.cycles,
                last: Instant::now(),
            }),
            config,
            store,
            log,
            buffer,
            state: Mutex::new(state),
            counters,
            pending: AtomicUsize::new(0),
            explanations_dir,
            reports_dir,
        });
        let (tx, rx) = unbounded::<Job>();
        let workers = (0..shared.config.explanation_workers)
            .map(|i| {
                let shared = Arc::clone(&shared);
                let rx: Receiver<Job> = rx.clone();
                std::thread::Builder::new()
                    .name(format!("explain-{i}"))
                    .spawn(move || {
                        nice_thread(10);
                        for job in rx {
                            shared.explain(job);
                        }
                    })
                    .map_err(Error::Io)
            })
            .collect::<Result<Vec<_>>>()?;
        let service = DetectionService {
            shared,
            sender: RwLock::new(Some(tx)),
            workers: Mutex::new(workers),
        };
        let snapshot = service.shared.store.current();
        for (item_id, transaction) in unexplained {
            service.schedule(Job {
                item_id,
                snapshot: Arc::clone(&snapshot),
                transaction,
            })?;
        }
        Ok(service)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.shared.config
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.shared.store.current()
    }

    pub fn store(&self) -> &Arc<SnapshotStore> {
        &self.shared.store
    }

    pub fn buffer(&self) -> &AdversarialBuffer {
        &self.shared.buffer
    }

    pub fn event_log(&self) -> &EventLog {
        &self.shared.log
    }

    pub fn counters(&self) -> &Counters {
        &self.shared.counters
    }

    fn schedule(&self, job: Job) -> Result<()> {
        let sender = self.sender.read();
        let tx = sender.as_ref().ok_or_else(|| Error::contract("service is shut down"))?;
        self.shared.pending.fetch_add(1, Ordering::SeqCst);
        tx.send(job).map_err(|_| {
            self.shared.pending.fetch_sub(1, Ordering::SeqCst);
            Error::contract("explanation pool has stopped")
        })
    }

    /// Scores one transaction. `E(x) <= tau` approves with no further work;
    /// anything else, including a scoring failure, becomes a review item.
    pub fn process_transaction(&self, t: &Transaction) -> Result<Decision> {
        let start = Instant::now();
        if self.sender.read().is_none() {
            return Err(Error::contract("service is shut down"));
        }
        let snapshot = self.shared.store.current();
        let scored = score(&snapshot.vae, &snapshot.threshold, t).and_then(|s| {
            if s.reconstruction_error.is_finite() {
                Ok(s)
            } else {
                Err(Error::Evaluation(format!(
                    "reconstruction error of transaction {} is not finite",
                    t.id
                )))
            }
        });
        match scored {
            Ok(s) if s.verdict == Verdict::Normal => self.approve(t, s, &snapshot, start),
            Ok(s) => self.flag(t, Some(s), None, snapshot, start),
            Err(e) => self.flag(t, None, Some(e.to_string()), snapshot, start),
        }
    }

    pub fn process_batch(&self, txs: &[Transaction]) -> Vec<Result<Decision>> {
        txs.iter().map(|t| self.process_transaction(t)).collect()
    }

    fn approve(&self, t: &Transaction, s: ScoreResult, snapshot: &Snapshot, start: Instant) -> Result<Decision> {
        let now = unix_now();
        self.shared.log.append(
            now,
            EventKind::Scored {
                transaction_id: t.id,
                reconstruction_error: Some(s.reconstruction_error),
                threshold: s.threshold,
                action: Action::Approve,
                model_version: s.model_version,
                generation: snapshot.generation,
            },
        )?;
        bump(&self.shared.counters.processed);
        bump(&self.shared.counters.approved);
        let latency_micros = start.elapsed().as_nanos() as f64 / 1e3;
        self.shared.latencies.lock().push(true, latency_micros);
        Ok(Decision {
            transaction_id: t.id,
            action: Action::Approve,
            settlement: Settlement::Released,
            score: Some(s),
            review_item: None,
            error: None,
            decided_at: now,
            latency_micros,
            snapshot_generation: snapshot.generation,
        })
    }

    fn flag(
        &self,
        t: &Transaction,
        s: Option<ScoreResult>,
        error: Option<String>,
        snapshot: Arc<Snapshot>,
        start: Instant,
    ) -> Result<Decision> {
        let now = unix_now();
        let mut state = self.shared.state.lock();
        if state.open >= self.shared.config.queue_capacity {
            bump(&self.shared.counters.backpressure_rejections);
            return Err(Error::Backpressure(self.shared.config.queue_capacity));
        }
        let item_id = state.next_item;
        self.shared.log.append(
            now,
            EventKind::Scored {
                transaction_id: t.id,
                reconstruction_error: s.as_ref().map(|s| s.reconstruction_error),
                threshold: snapshot.threshold.tau,
                action: Action::PendingReview,
                model_version: snapshot.vae.version(),
                generation: snapshot.generation,
            },
        )?;
        self.shared.log.append(
            now,
            EventKind::Flagged {
                item_id,
                transaction: t.clone(),
                score: s.clone(),
                scoring_error: error.clone(),
                generation: snapshot.generation,
            },
        )?;
        state.next_item += 1;
        state.open += 1;
        state.by_transaction.insert(t.id, item_id);
        state.items.insert(
            item_id,
            ReviewItem {
                item_id,
                transaction: t.clone(),
                score: s.clone(),
                explanation: None,
                scoring_error: error.clone(),
                enqueued_at: now,
                state: ReviewState::Open,
                reviewer: None,
                resolved_at: None,
                snapshot_generation: snapshot.generation,
            },
        );
        bump(&self.shared.counters.processed);
        if s.is_some() {
            bump(&self.shared.counters.flagged);
            self.schedule(Job {
                item_id,
                snapshot: Arc::clone(&snapshot),
                transaction: t.clone(),
            })?;
        } else {
            bump(&self.shared.counters.scoring_errors);
        }
        drop(state);
        let latency_micros = start.elapsed().as_nanos() as f64 / 1e3;
        self.shared.latencies.lock().push(false, latency_micros);
        Ok(Decision {
            transaction_id: t.id,
            action: Action::PendingReview,
            settlement: self.shared.config.pending_policy.settlement(),
            score: s,
            review_item: Some(item_id),
            error,
            decided_at: now,
            latency_micros,
            snapshot_generation: snapshot.generation,
        })
    }

    /// Applies a reviewer's verdict to an open item, exactly once.
    pub fn resolve_review(&self, item_id: u64, verdict: ReviewVerdict, reviewer: &str) -> Result<Decision> {
        let start = Instant::now();
        let mut state = self.shared.state.lock();
        let item = state
            .items
            .get(&item_id)
            .ok_or_else(|| Error::NotFound(format!("review item {item_id}")))?;
        if item.state != ReviewState::Open {
            return Err(Error::Conflict(format!(
                "review item {item_id} already resolved as {:?}",
                item.state
            )));
        }
        let transaction = item.transaction.clone();
        let encoded = match verdict {
            ReviewVerdict::ConfirmedFraud => Some(self.shared.store.current().vae.codec.encode(&transaction)?.values),
            ReviewVerdict::FalsePositive => None,
        };
        let now = unix_now();
        self.shared.log.append(
            now,
            EventKind::Reviewed {
                item_id,
                verdict,
                reviewer: reviewer.to_string(),
            },
        )?;
        let (action, settlement) = match encoded {
            Some(encoded) => {
                let entry = self
                    .shared
                    .buffer
                    .append(transaction.clone(), encoded, None, reviewer, now)?;
                self.shared.log.append(now, EventKind::Buffered { item_id, entry })?;
                bump(&self.shared.counters.blocked);
                (Action::Block, Settlement::Declined)
            }
            None => {
                state.false_positives.push(transaction.clone());
                self.shared.log.append(
                    now,
                    EventKind::FpLabeled {
                        item_id,
                        transaction: transaction.clone(),
                    },
                )?;
                bump(&self.shared.counters.false_positives);
                (Action::Approve, Settlement::Released)
            }
        };
        state.open -= 1;
        let item = state.items.get_mut(&item_id).expect("checked above");
        item.state = match verdict {
            ReviewVerdict::ConfirmedFraud => ReviewState::ConfirmedFraud,
            ReviewVerdict::FalsePositive => ReviewState::FalsePositive,
        };
        item.reviewer = Some(reviewer.to_string());
        item.resolved_at = Some(now);
        Ok(Decision {
            transaction_id: transaction.id,
            action,
            settlement,
            score: item.score.clone(),
            review_item: Some(item_id),
            error: item.scoring_error.clone(),
            decided_at: now,
            latency_micros: start.elapsed().as_nanos() as f64 / 1e3,
            snapshot_generation: item.snapshot_generation,
        })
    }

    pub fn review_item(&self, item_id: u64) -> Option<ReviewItem> {
        self.shared.state.lock().items.get(&item_id).cloned()
    }

    /// Review items, optionally filtered by state, highest score first.
    pub fn reviews(&self, state: Option<ReviewState>) -> Vec<ReviewItem> {
        let mut v: Vec<ReviewItem> = self
            .shared
            .state
            .lock()
            .items
            .values()
            .filter(|i| state.is_none_or(|s| i.state == s))
            .cloned()
            .collect();
        let key = |i: &ReviewItem| i.score.as_ref().map_or(f64::INFINITY, |s| s.reconstruction_error);
        v.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.item_id.cmp(&b.item_id)));
        v
    }

    /// The explanation of a flagged transaction: `Ok(None)` while it is
    /// still being computed, not-found when the transaction was never flagged.
    pub fn explanation(&self, transaction_id: u64) -> Result<Option<Explanation>> {
        let state = self.shared.state.lock();
        let item = state
            .by_transaction
            .get(&transaction_id)
            .and_then(|id| state.items.get(id))
            .ok_or_else(|| {
                Error::NotFound(format!(
                    "transaction {transaction_id} was not flagged; explanations exist only above the threshold"
                ))
            })?;
        if item.score.is_none() {
            return Err(Error::NotFound(format!(
                "transaction {transaction_id} could not be scored and has no explanation"
            )));
        }
        Ok(item.explanation.clone())
    }

    pub fn false_positives(&self) -> Vec<Transaction> {
        self.shared.state.lock().false_positives.clone()
    }

    pub fn pending_explanations(&self) -> usize {
        self.shared.pending.load(Ordering::SeqCst)
    }

    /// Blocks until every scheduled explanation has finished or `timeout`
    /// passes; returns whether the pool drained.
    pub fn drain(&self, timeout: Duration) -> bool {
        let until = Instant::now() + timeout;
        while self.pending_explanations() > 0 {
            if Instant::now() >= until {
                return false;
            }
            std::thread::sleep(Duration::from_millis(1));
        }
        true
    }

    /// Live state in the same shape a log replay produces.
    pub fn projection(&self) -> ReplayedState {
        let state = self.shared.state.lock();
        let c = &self.shared.counters;
        let len = self.shared.log.len() as u64;
        ReplayedState {
            items: state.items.clone(),
            buffer: self.shared.buffer.entries(),
            false_positives: state.false_positives.clone(),
            scored: get(&c.processed),
            approved: get(&c.approved),
            flagged: get(&c.flagged),
            explained: get(&c.explained),
            cycles: get(&c.cycles_completed),
            last_seq: len.checked_sub(1),
        }
    }

    pub fn metrics(&self) -> ServiceMetrics {
        let c = &self.shared.counters;
        let snapshot = self.shared.store.current();
        let (open, fps) = {
            let s = self.shared.state.lock();
            (s.open, s.false_positives.len())
        };
        let (approve, flag) = {
            let l = self.shared.latencies.lock();
            (
                l.approve.iter().copied().collect::<Vec<_>>(),
                l.flag.iter().copied().collect::<Vec<_>>(),
            )
        };
        let processed = get(&c.processed);
        ServiceMetrics {
            processed,
            approved: get(&c.approved),
            flagged: get(&c.flagged),
            scoring_errors: get(&c.scoring_errors),
            explained: get(&c.explained),
            explanation_failures: get(&c.explanation_failures),
            approve_path_explanations: get(&c.approve_path_explanations),
            pending_explanations: self.pending_explanations(),
            blocked: get(&c.blocked),
            false_positives: get(&c.false_positives),
            backpressure_rejections: get(&c.backpressure_rejections),
            open_reviews: open,
            buffer_depth: self.shared.buffer.unconsumed_count(),
            buffer_total: self.shared.buffer.len(),
            fp_set_size: fps,
            explained_fraction: if processed == 0 {
                0.0
            } else {
                get(&c.explained) as f64 / processed as f64
            },
            approve_latency: percentile_summary(&approve),
            flag_latency: percentile_summary(&flag),
            vae_version: snapshot.vae.version(),
            gan_version: snapshot.gan_version(),
            generation: snapshot.generation,
            tau: snapshot.threshold.tau,
            cycles_completed: get(&c.cycles_completed),
            cycles_aborted: get(&c.cycles_aborted),
            events: self.shared.log.len(),
        }
    }

    /// Runs one retraining cycle if a trigger is due (or unconditionally with
    /// `force`). Returns `Ok(None)` when nothing was due or another cycle is
    /// already running.
    pub fn run_cycle(&self, ctx: &CycleContext, config: &CycleConfig, force: bool) -> Result<Option<CycleReport>> {
        let Some(mut cs) = self.shared.cycle.try_lock() else {
            return Ok(None);
        };
        let trigger = if force {
            Some(Trigger::Manual)
        } else {
            config.due(self.shared.buffer.unconsumed_count(), cs.last.elapsed())
        };
        if trigger.is_none() {
            return Ok(None);
        }
        let fps = self.false_positives();
        let cycle = cs.next;
        cs.next += 1;
        cs.last = Instant::now();
        let result = run_retraining_cycle(
            &self.shared.store,
            &self.shared.buffer,
            &fps,
            ctx,
            config,
            cycle,
            trigger,
        );
        match result {
            Ok(Some(report)) => {
                self.shared.log.append(
                    unix_now(),
                    EventKind::RetrainCycle {
                        cycle,
                        generation: report.generation,
                        vae_version: report.vae_version_after,
                        gan_version: report.gan_version,
                        tau: report.tau_after,
                        consumed: report.consumed.clone(),
                    },
                )?;
                bump(&self.shared.counters.cycles_completed);
                if let Some(dir) = &self.shared.reports_dir {
                    report.save(dir)?;
                }
                Ok(Some(report))
            }
            Ok(None) => Ok(None),
            Err(e) => {
                let stage = match &e {
                    Error::CycleAborted { stage, .. } => *stage,
                    _ => 0,
                };
                self.shared.log.append(
                    unix_now(),
                    EventKind::RetrainAborted {
                        cycle,
                        stage,
                        reason: e.to_string(),
                    },
                )?;
                bump(&self.shared.counters.cycles_aborted);
                Err(e)
            }
        }
    }

    /// Runs one forced cycle on a background thread at idle priority.
    pub fn spawn_cycle(
        self: &Arc<Self>,
        ctx: CycleContext,
        config: CycleConfig,
    ) -> JoinHandle<Result<Option<CycleReport>>> {
        let service = Arc::clone(self);
        std::thread::spawn(move || {
            lower_thread_priority();
            service.run_cycle(&ctx, &config, true)
        })
    }

    /// Starts the background scheduler that polls the cycle trigger.
    pub fn start_retraining(self: &Arc<Self>, ctx: CycleContext) -> RetrainHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let service = Arc::clone(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            lower_thread_priority();
            let config = service.shared.config.cycle.clone();
            let poll = Duration::from_secs_f64(config.poll_secs);
            while !flag.load(Ordering::SeqCst) {
                let wake = Instant::now() + poll;
                while Instant::now() < wake && !flag.load(Ordering::SeqCst) {
                    std::thread::sleep(Duration::from_millis(10).min(poll));
                }
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                // failures are recorded in the event log and counters
                let _ = service.run_cycle(&ctx, &config, false);
            }
        });
        RetrainHandle {
            stop,
            handle: Some(handle),
        }
    }

    /// Stops intake, lets the explanation pool finish its queue and flushes
    /// the event log.
    pub fn shutdown(&self) -> Result<()> {
        self.sender.write().take();
        for h in self.workers.lock().drain(..) {
            let _ = h.join();
        }
        self.shared.log.flush()
    }
}

impl Drop for DetectionService {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

/// Handle to the retraining scheduler; stops it when dropped.
pub struct RetrainHandle {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl RetrainHandle {
    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RetrainHandle {
    fn drop(&mut self) {
        self.halt();
    }
}
