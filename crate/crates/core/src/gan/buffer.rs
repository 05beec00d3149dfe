use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::codec::Transaction;
use crate::error::{Error, Result};
use crate::sim::Scenario;

/// Expert-confirmed fraud awaiting a retraining cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub entry_id: u64,
    pub transaction: Transaction,
    pub encoded: Vec<f64>,
    /// Unix seconds of the expert confirmation.
    pub confirmed_at: f64,
    pub scenario: Option<Scenario>,
    pub reviewer: String,
    pub consumed: bool,
}

/// One line of the on-disk buffer log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum BufferRecord {
    Append { entry: BufferEntry },
    Consume { entry_ids: Vec<u64>, cycle: u64 },
}

struct Inner {
    entries: Vec<BufferEntry>,
    log: Option<File>,
}

/// Append-only store of confirmed fraud. Entries are never removed or
/// edited; a cycle only sets their consumed flag, which is itself logged.
pub struct AdversarialBuffer {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl std::fmt::Debug for AdversarialBuffer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdversarialBuffer")
            .field("path", &self.path)
            .field("len", &self.len())
            .finish()
    }
}

impl Default for AdversarialBuffer {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl AdversarialBuffer {
    pub fn in_memory() -> Self {
        AdversarialBuffer {
            path: None,
            inner: Mutex::new(Inner {
                entries: Vec::new(),
                log: None,
            }),
        }
    }

    /// Opens (or creates) a log-backed buffer, replaying existing records.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries: Vec<BufferEntry> = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: BufferRecord = serde_json::from_str(&line)
                    .map_err(|e| Error::Checkpoint(format!("buffer log line {}: {e}", n + 1)))?;
                apply(&mut entries, record)?;
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AdversarialBuffer {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner {
                entries,
                log: Some(log),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(
        &self,
        transaction: Transaction,
        encoded: Vec<f64>,
        scenario: Option<Scenario>,
        reviewer: &str,
        confirmed_at: f64,
    ) -> Result<BufferEntry> {
        let mut inner = self.inner.lock();
        let entry = BufferEntry {
            entry_id: inner.entries.len() as u64,
            transaction,
            encoded,
            confirmed_at,
            scenario,
            reviewer: reviewer.to_string(),
            consumed: false,
        };
        write_record(&mut inner.log, &BufferRecord::Append { entry: entry.clone() })?;
        inner.entries.push(entry.clone());
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<BufferEntry> {
        self.inner.lock().entries.clone()
    }

    pub fn unconsumed(&self) -> Vec<BufferEntry> {
        self.inner
            .lock()
            .entries
            .iter()
            .filter(|e| !e.consumed)
            .cloned()
            .collect()
    }

    pub fn unconsumed_count(&self) -> usize {
        self.inner.lock().entries.iter().filter(|e| !e.consumed).count()
    }

    /// Flags entries as used by retraining cycle `cycle`.
    pub fn mark_consumed(&self, entry_ids: &[u64], cycle: u64) -> Result<()> {
        let mut inner = self.inner.lock();
        let record = BufferRecord::Consume {
            entry_ids: entry_ids.to_vec(),
            cycle,
        };
        // validate before logging
        let mut probe = inner.entries.clone();
        apply(&mut probe, record.clone())?;
        write_record(&mut inner.log, &record)?;
        inner.entries = probe;
        Ok(())
    }
}

fn apply(entries: &mut Vec<BufferEntry>, record: BufferRecord) -> Result<()> {
    match record {
        BufferRecord::Append { entry } => {
            if entry.entry_id != entries.len() as u64 {
                return Err(Error::Checkpoint(format!(
                    "buffer entry {} out of sequence",
                    entry.entry_id
                )));
            }
            entries.push(entry);
        }
        BufferRecord::Consume { entry_ids, .. } => {
            for id in entry_ids {
                let e = entries
                    .get_mut(id as usize)
                    .ok_or_else(|| Error::NotFound(format!("buffer entry {id}")))?;
                e.consumed = true;
            }
        }
    }
    Ok(())
}

fn write_record(log: &mut Option<File>, record: &BufferRecord) -> Result<()> {
    if let Some(f) = log {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.flush()?;
    }
    Ok(())
}
