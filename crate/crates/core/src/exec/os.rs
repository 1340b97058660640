//! Best-effort thread priority and per-thread context-switch counters.

use serde::{Deserialize, Serialize};

use super::plan::PriorityHint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorityOutcome {
    /// No elevation was requested.
    NotRequested,
    /// Every worker thread was elevated.
    Applied,
    /// Elevation was refused; workers ran at normal priority.
    Downgraded(String),
}

/// Nice value requested for high-priority workers.
const HIGH_PRIORITY_NICE: i32 = -10;

pub(crate) fn apply_priority(hint: PriorityHint) -> PriorityOutcome {
    match hint {
        PriorityHint::Normal => PriorityOutcome::NotRequested,
        PriorityHint::High => raise_current_thread(),
    }
}

#[cfg(target_os = "linux")]
fn raise_current_thread() -> PriorityOutcome {
    // On Linux, PRIO_PROCESS with a thread id changes only that thread.
    let tid = unsafe { libc::syscall(libc::SYS_gettid) } as libc::id_t;
    let rc = unsafe { libc::setpriority(libc::PRIO_PROCESS, tid, HIGH_PRIORITY_NICE) };
    if rc == 0 {
        PriorityOutcome::Applied
    } else {
        PriorityOutcome::Downgraded(format!(
            "setpriority({HIGH_PRIORITY_NICE}) refused: {}",
            std::io::Error::last_os_error()
        ))
    }
}

#[cfg(not(target_os = "linux"))]
fn raise_current_thread() -> PriorityOutcome {
    PriorityOutcome::Downgraded("thread priority is not supported on this platform".into())
}

/// Folds per-worker outcomes into one run-level outcome.
pub(crate) fn combine(outcomes: impl IntoIterator<Item = PriorityOutcome>) -> PriorityOutcome {
    let mut result = PriorityOutcome::NotRequested;
    for o in outcomes {
        match (&result, o) {
            (PriorityOutcome::Downgraded(_), _) => {}
            (_, d @ PriorityOutcome::Downgraded(_)) => result = d,
            (_, PriorityOutcome::Applied) => result = PriorityOutcome::Applied,
            (_, PriorityOutcome::NotRequested) => {}
        }
    }
    result
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSwitches {
    pub voluntary: u64,
    pub involuntary: u64,
}

impl std::ops::Add for ContextSwitches {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            voluntary: self.voluntary + o.voluntary,
            involuntary: self.involuntary + o.involuntary,
        }
    }
}

impl std::ops::Sub for ContextSwitches {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            voluntary: self.voluntary.saturating_sub(o.voluntary),
            involuntary: self.involuntary.saturating_sub(o.involuntary),
        }
    }
}

/// Context switches of the calling thread so far.
#[cfg(target_os = "linux")]
pub(crate) fn thread_context_switches() -> Option<ContextSwitches> {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let rc = unsafe { libc::getrusage(libc::RUSAGE_THREAD, &mut usage) };
    (rc == 0).then_some(ContextSwitches {
        voluntary: usage.ru_nvcsw as u64,
        involuntary: usage.ru_nivcsw as u64,
    })
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn thread_context_switches() -> Option<ContextSwitches> {
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_prefers_downgrade() {
        use PriorityOutcome::*;
        assert_eq!(combine([NotRequested, NotRequested]), NotRequested);
        assert_eq!(combine([Applied, Applied]), Applied);
        assert!(matches!(combine([Applied, Downgraded("x".into()), Applied]), Downgraded(_)));
    }

    #[test]
    fn high_priority_never_fails_hard() {
        let outcome = std::thread::spawn(|| apply_priority(PriorityHint::High)).join().unwrap();
        assert!(matches!(outcome, PriorityOutcome::Applied | PriorityOutcome::Downgraded(_)));
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn context_switches_are_readable() {
        let a = thread_context_switches().unwrap();
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = thread_context_switches().unwrap();
        assert!(b.voluntary > a.voluntary);
    }
}
