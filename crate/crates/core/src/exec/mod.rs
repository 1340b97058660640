//! Epoch-synchronous parallel execution of receiver channels.
//!
//! Each epoch has two phases separated by barriers. Workers persist across
//! epochs by default; channels are assigned to workers either statically in
//! contiguous blocks or dynamically by claiming from a shared counter.

mod engine;
mod os;
mod plan;
mod trace;

pub use engine::{run_epochs, EpochTask, Progress, RunReport};
pub use os::{ContextSwitches, PriorityOutcome};
pub use plan::{plan_partition, static_block, static_blocks, ExecPlan, Partition, PriorityHint, Schedule};
pub use trace::{verify_ordering, Boundary, ExecTrace, OrderingViolation, Phase, TraceEvent};
