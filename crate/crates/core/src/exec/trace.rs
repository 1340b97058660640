use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    One,
    Two,
}

/// One executed task unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub channel_id: u32,
    pub phase: Phase,
    pub epoch: u64,
    pub worker_id: usize,
    /// Nanoseconds since the run's origin instant.
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// A phase-two unit of the epoch started before every phase-one unit ended.
    PhaseOneToTwo,
    /// A phase-one unit of the next epoch started before every phase-two unit ended.
    EpochToEpoch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderingViolation {
    pub epoch: u64,
    pub boundary: Boundary,
    pub last_end_ns: u64,
    pub first_start_ns: u64,
}

#[derive(Default, Clone, Copy)]
struct Span {
    min_start: u64,
    max_end: u64,
    seen: bool,
}

impl Span {
    fn add(&mut self, e: &TraceEvent) {
        if self.seen {
            self.min_start = self.min_start.min(e.start_ns);
            self.max_end = self.max_end.max(e.end_ns);
        } else {
            *self = Span {
                min_start: e.start_ns,
                max_end: e.end_ns,
                seen: true,
            };
        }
    }
}

/// Checks the two-phase barrier contract: within every epoch all phase-one
/// units end before any phase-two unit starts, and all phase-two units end
/// before any phase-one unit of the following epoch starts.
pub fn verify_ordering(trace: &ExecTrace) -> Result<Vec<OrderingViolation>> {
    let mut per_worker: BTreeMap<usize, Vec<&TraceEvent>> = BTreeMap::new();
    let mut spans: BTreeMap<u64, [Span; 2]> = BTreeMap::new();
    for e in &trace.events {
        if e.end_ns < e.start_ns {
            return Err(Error::invalid(format!(
                "event for channel {} epoch {} ends before it starts",
                e.channel_id, e.epoch
            )));
        }
        per_worker.entry(e.worker_id).or_default().push(e);
        let idx = match e.phase {
            Phase::One => 0,
            Phase::Two => 1,
        };
        spans.entry(e.epoch).or_default()[idx].add(e);
    }
    for (worker, events) in &mut per_worker {
        events.sort_by_key(|e| (e.start_ns, e.end_ns));
        if let Some(w) = events.windows(2).find(|w| w[1].start_ns < w[0].end_ns) {
            return Err(Error::invalid(format!(
                "worker {worker} has overlapping events at {} ns",
                w[1].start_ns
            )));
        }
    }

    let mut violations = Vec::new();
    let epochs: Vec<_> = spans.keys().copied().collect();
    for &epoch in &epochs {
        let [one, two] = spans[&epoch];
        if one.seen && two.seen && one.max_end > two.min_start {
            violations.push(OrderingViolation {
                epoch,
                boundary: Boundary::PhaseOneToTwo,
                last_end_ns: one.max_end,
                first_start_ns: two.min_start,
            });
        }
        if let Some([next_one, _]) = spans.get(&(epoch + 1)) {
            if two.seen && next_one.seen && two.max_end > next_one.min_start {
                violations.push(OrderingViolation {
                    epoch,
                    boundary: Boundary::EpochToEpoch,
                    last_end_ns: two.max_end,
                    first_start_ns: next_one.min_start,
                });
            }
        }
    }
    Ok(violations)
}
