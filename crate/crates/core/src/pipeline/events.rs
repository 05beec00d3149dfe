use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::types::{Action, ReviewItem, ReviewState, ReviewVerdict};
use crate::codec::{read_jsonl, Transaction};
use crate::error::{Error, Result};
use crate::gan::BufferEntry;
use crate::shap::Explanation;
use crate::vae::ScoreResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Scored {
        transaction_id: u64,
        reconstruction_error: Option<f64>,
        threshold: f64,
        action: Action,
        model_version: u64,
        generation: u64,
    },
    Flagged {
        item_id: u64,
        transaction: Transaction,
        score: Option<ScoreResult>,
        scoring_error: Option<String>,
        generation: u64,
    },
    Explained {
        item_id: u64,
        explanation: Explanation,
    },
    ExplanationFailed {
        item_id: u64,
        reason: String,
    },
    Reviewed {
        item_id: u64,
        verdict: ReviewVerdict,
        reviewer: String,
    },
    Buffered {
        item_id: u64,
        entry: BufferEntry,
    },
    FpLabeled {
        item_id: u64,
        transaction: Transaction,
    },
    RetrainCycle {
        cycle: u64,
        generation: u64,
        vae_version: u64,
        gan_version: u64,
        tau: f64,
        consumed: Vec<u64>,
    },
    RetrainAborted {
        cycle: u64,
        stage: u8,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Unix seconds.
    pub at: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

struct Inner {
    next_seq: u64,
    events: Vec<Event>,
    file: Option<BufWriter<File>>,
}

/// Single-writer, append-only event log; sequence numbers are assigned under
/// the writer lock so they are strictly increasing and gap-free.
pub struct EventLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("path", &self.path).finish()
    }
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            path: None,
            inner: Mutex::new(Inner {
                next_seq: 0,
                events: Vec::new(),
                file: None,
            }),
        }
    }

    /// Opens or creates a log file, loading every existing event.
    pub fn open(path: &Path) -> Result<Self> {
        let events: Vec<Event> = if path.exists() { read_jsonl(path)? } else { Vec::new() };
        for (i, e) in events.iter().enumerate() {
            if e.seq != i as u64 {
                return Err(Error::contract(format!(
                    "event log {} has sequence {} at position {i}",
                    path.display(),
                    e.seq
                )));
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLog {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                next_seq: events.len() as u64,
                events,
                file: Some(BufWriter::new(file)),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, at: f64, kind: EventKind) -> Result<u64> {
        let mut inner = self.inner.lock();
        let seq = inner.next_seq;
        let event = Event { seq, at, kind };
        if let Some(f) = inner.file.as_mut() {
            serde_json::to_writer(&mut *f, &event)?;
            f.write_all(b"\n")?;
            // scoring events are the bulk; everything else reaches disk at once
            if !matches!(event.kind, EventKind::Scored { .. }) {
                f.flush()?;
            }
        }
        inner.events.push(event);
        inner.next_seq += 1;
        Ok(seq)
    }

    pub fn flush(&self) -> Result<()> {
        if let Some(f) = self.inner.lock().file.as_mut() {
            f.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn events(&self) -> Vec<Event> {
        self.inner.lock().events.clone()
    }

    pub fn replay(&self) -> Result<ReplayedState> {
        ReplayedState::from_events(&self.inner.lock().events)
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

/// Queue, buffer and false-positive projections of an event sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReplayedState {
    pub items: BTreeMap<u64, ReviewItem>,
    pub buffer: Vec<BufferEntry>,
    pub false_positives: Vec<Transaction>,
    pub scored: u64,
    pub approved: u64,
    pub flagged: u64,
    pub explained: u64,
    pub cycles: u64,
    pub last_seq: Option<u64>,
}

impl ReplayedState {
    pub fn from_events(events: &[Event]) -> Result<Self> {
        let mut s = ReplayedState::default();
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn open_items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values().filter(|i| i.state == ReviewState::Open)
    }

    fn item(&mut self, id: u64) -> Result<&mut ReviewItem> {
        self.items
            .get_mut(&id)
            .ok_or_else(|| Error::NotFound(format!("event refers to unknown review item {id}")))
    }

    pub fn apply(&mut self, e: &Event) -> Result<()> {
        if let Some(last) = self.last_seq {
            if e.seq <= last {
                return Err(Error::contract(format!("event {} after {last}", e.seq)));
            }
        }
        self.last_seq = Some(e.seq);
        match &e.kind {
            EventKind::Scored { action, .. } => {
                self.scored += 1;
                if *action == Action::Approve {
                    self.approved += 1;
                }
            }
            EventKind::Flagged {
                item_id,
                transaction,
                score,
                scoring_error,
                generation,
            } => {
                if score.is_some() {
                    self.flagged += 1;
                }
                self.items.insert(
                    *item_id,
                    ReviewItem {
                        item_id: *item_id,
                        transaction: transaction.clone(),
                        score: score.clone(),
                        explanation: None,
                        scoring_error: scoring_error.clone(),
                        enqueued_at: e.at,
                        state: ReviewState::Open,
                        reviewer: None,
                        resolved_at: None,
                        snapshot_generation: *generation,
                    },
                );
            }
            EventKind::Explained { item_id, explanation } => {
                self.item(*item_id)?.explanation = Some(explanation.clone());
                self.explained += 1;
            }
            EventKind::ExplanationFailed { item_id, .. } => {
                self.item(*item_id)?;
            }
            EventKind::Reviewed {
                item_id,
                verdict,
                reviewer,
            } => {
                let item = self.item(*item_id)?;
                if item.state != ReviewState::Open {
                    return Err(Error::Conflict(format!("item {item_id} reviewed twice in the log")));
                }
                item.state = match verdict {
                    ReviewVerdict::ConfirmedFraud => ReviewState::ConfirmedFraud,
                    ReviewVerdict::FalsePositive => ReviewState::FalsePositive,
                };
                item.reviewer = Some(reviewer.clone());
                item.resolved_at = Some(e.at);
            }
            EventKind::Buffered { entry, .. } => self.buffer.push(entry.clone()),
            EventKind::FpLabeled { transaction, .. } => self.false_positives.push(transaction.clone()),
            EventKind::RetrainCycle { consumed, .. } => {
                for id in consumed {
                    let entry = self
                        .buffer
                        .iter_mut()
                        .find(|b| b.entry_id == *id)
                        .ok_or_else(|| Error::NotFound(format!("cycle consumed unknown buffer entry {id}")))?;
                    entry.consumed = true;
                }
                self.cycles += 1;
            }
            EventKind::RetrainAborted { .. } => {}
        }
        Ok(())
    }
}
