use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Contiguous blocks fixed before the phase starts.
    Static,
    /// Workers claim the next unclaimed chunk as they free up.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorityHint {
    #[default]
    Normal,
    High,
}

macro_rules! from_str_lower {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

from_str_lower!(Schedule { "static" => Schedule::Static, "dynamic" => Schedule::Dynamic });
from_str_lower!(PriorityHint { "normal" => PriorityHint::Normal, "high" => PriorityHint::High });

/// How a run distributes channel work. Immutable for the duration of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecPlan {
    pub worker_count: usize,
    pub schedule: Schedule,
    pub priority_hint: PriorityHint,
    /// Keep workers alive across epochs (true) or start a fresh set of
    /// workers for every phase of every epoch (false).
    pub persistent_pool: bool,
    /// Tasks taken per claim under [`Schedule::Dynamic`].
    pub dynamic_chunk: usize,
}

impl Default for ExecPlan {
    fn default() -> Self {
        Self::new(1)
    }
}

impl ExecPlan {
    pub fn new(worker_count: usize) -> Self {
        Self {
            worker_count,
            schedule: Schedule::Dynamic,
            priority_hint: PriorityHint::Normal,
            persistent_pool: true,
            dynamic_chunk: 1,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_priority(mut self, priority_hint: PriorityHint) -> Self {
        self.priority_hint = priority_hint;
        self
    }

    pub fn with_persistent_pool(mut self, persistent: bool) -> Self {
        self.persistent_pool = persistent;
        self
    }

    /// One worker per channel with a static one-to-one mapping, the layout of
    /// a receiver that starts a thread for every channel.
    pub fn per_channel(n_channels: usize) -> Self {
        Self::new(n_channels.max(1)).with_schedule(Schedule::Static)
    }

    pub fn validate(&self) -> Result<()> {
        if self.worker_count == 0 {
            return Err(Error::config("worker_count must be at least 1"));
        }
        if self.dynamic_chunk == 0 {
            return Err(Error::config("dynamic_chunk must be at least 1"));
        }
        Ok(())
    }
}

/// Assignment of `n_tasks` task positions to workers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partition {
    /// `blocks[w]` is the contiguous range owned by worker `w`.
    Static(Vec<Range<usize>>),
    /// Positions are claimed at run time, `chunk` at a time, each exactly once.
    Dynamic { n_tasks: usize, chunk: usize },
}

/// Balanced contiguous blocks: the first `n % W` workers take `ceil(n / W)`
/// tasks, the rest take `floor(n / W)`.
pub fn static_blocks(n_tasks: usize, n_workers: usize) -> Vec<Range<usize>> {
    let n_workers = n_workers.max(1);
    (0..n_workers).map(|w| static_block(n_tasks, n_workers, w)).collect()
}

/// The block of [`static_blocks`] owned by `worker`.
pub fn static_block(n_tasks: usize, n_workers: usize, worker: usize) -> Range<usize> {
    let n_workers = n_workers.max(1);
    let base = n_tasks / n_workers;
    let extra = n_tasks % n_workers;
    let start = worker * base + worker.min(extra);
    let len = base + usize::from(worker < extra);
    start.min(n_tasks)..(start + len).min(n_tasks)
}

pub fn plan_partition(n_tasks: usize, n_workers: usize, schedule: Schedule) -> Partition {
    match schedule {
        Schedule::Static => Partition::Static(static_blocks(n_tasks, n_workers)),
        Schedule::Dynamic => Partition::Dynamic { n_tasks, chunk: 1 },
    }
}
