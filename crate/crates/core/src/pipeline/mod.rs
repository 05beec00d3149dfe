//! The synchronous detection path, the review queue and the asynchronous
//! retraining scheduler.

mod cycle;
mod events;
mod latency;
mod service;
mod snapshot;
mod types;

pub use cycle::{run_retraining_cycle, CycleConfig, CycleContext, CycleReport, Trigger, SYNTHETIC_ID_BASE};
pub use events::{Event, EventKind, EventLog, ReplayedState};
pub use latency::{measure_latency, percentile_summary, LatencyReport, PathLatency};
pub use service::{Counters, DetectionService, RetrainHandle, ServiceMetrics};
pub use snapshot::{Snapshot, SnapshotStore};
pub use types::{Action, Decision, PendingPolicy, PipelineConfig, ReviewItem, ReviewState, ReviewVerdict, Settlement};

pub(crate) fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Moves the calling thread to the idle scheduling class, falling back to
/// the weakest nice level. Returns whether either change took effect.
pub fn lower_thread_priority() -> bool {
    #[cfg(target_os = "linux")]
    unsafe {
        let param = libc::sched_param { sched_priority: 0 };
        if libc::sched_setscheduler(0, libc::SCHED_IDLE, &param) == 0 {
            return true;
        }
        let tid = libc::syscall(libc::SYS_gettid) as libc::id_t;
        libc::setpriority(libc::PRIO_PROCESS, tid, 19) == 0
    }
    #[cfg(not(target_os = "linux"))]
    {
        false
    }
}

/// Raises the nice value of the calling thread by `delta`.
pub fn nice_thread(delta: i32) -> bool {
    #[cfg(target_os = "linux")]
    unsafe {
        let tid = libc::syscall(libc::SYS_gettid) as libc::id_t;
        let current = libc::getpriority(libc::PRIO_PROCESS, tid);
        libc::setpriority(libc::PRIO_PROCESS, tid, (current + delta).min(19)) == 0
    }
    #[cfg(not(target_os = "linux"))]
    {
        let _ = delta;
        false
    }
}
