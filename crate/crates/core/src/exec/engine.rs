use serde::{Deserialize, Serialize};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Barrier, Condvar, Mutex, PoisonError, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use super::os::{self, ContextSwitches, PriorityOutcome};
use super::plan::{static_block, ExecPlan, Schedule};
use super::trace::{ExecTrace, Phase, TraceEvent};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Progress {
    /// The channel wants another epoch.
    Continue,
    /// The channel is done; it is not scheduled again.
    Complete,
}

/// One channel's work, split into two phases per epoch.
///
/// Phase one of every active channel finishes before phase two of any channel
/// starts, and phase two of every channel finishes before the next epoch's
/// phase one starts. A run continues while at least one channel returns
/// [`Progress::Continue`] from phase two.
pub trait EpochTask: Send {
    fn channel_id(&self) -> u32;
    fn phase_one(&mut self, epoch: u64) -> Result<()>;
    fn phase_two(&mut self, epoch: u64) -> Result<Progress>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Epochs executed, including the one in which the last channel completed.
    pub epochs: u64,
    pub worker_count: usize,
    /// Worker threads started over the whole run.
    pub threads_spawned: usize,
    pub priority: PriorityOutcome,
    /// Summed over worker threads; `None` where the platform has no counter.
    pub context_switches: Option<ContextSwitches>,
    /// Task units (one phase of one channel) executed by each worker id.
    pub units_per_worker: Vec<u64>,
    pub elapsed: Duration,
    pub trace: Option<ExecTrace>,
}

#[derive(Default)]
struct WorkerLog {
    events: Vec<TraceEvent>,
    units: u64,
    priority: Option<PriorityOutcome>,
    switches: Option<ContextSwitches>,
}

#[derive(Clone, Copy, PartialEq)]
enum Gate {
    Wait,
    Go,
    Cancel,
}

struct Shared<'a, T> {
    slots: Vec<Mutex<&'a mut T>>,
    ids: Vec<u32>,
    finished: Vec<AtomicBool>,
    active: RwLock<Vec<usize>>,
    cursors: [AtomicUsize; 2],
    epoch: AtomicU64,
    epochs_run: AtomicU64,
    /// Skip remaining work; set on failure or when nothing is active.
    stop: AtomicBool,
    /// Leave the epoch loop. Written only between the second and third barrier.
    done: AtomicBool,
    failure: Mutex<Option<Error>>,
    spawned: AtomicUsize,
    plan: ExecPlan,
    trace: bool,
    origin: Instant,
}

fn phase_index(phase: Phase) -> usize {
    match phase {
        Phase::One => 0,
        Phase::Two => 1,
    }
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "non-string panic payload".into())
}

impl<'a, T: EpochTask> Shared<'a, T> {
    fn now_ns(&self) -> u64 {
        self.origin.elapsed().as_nanos() as u64
    }

    fn fail(&self, err: Error) {
        let mut slot = self.failure.lock().unwrap_or_else(PoisonError::into_inner);
        if slot.is_none() {
            *slot = Some(err);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn execute(&self, idx: usize, phase: Phase, epoch: u64, worker: usize, log: &mut WorkerLog) {
        let mut task = self.slots[idx].lock().unwrap_or_else(PoisonError::into_inner);
        let start_ns = self.now_ns();
        let outcome = catch_unwind(AssertUnwindSafe(|| match phase {
            Phase::One => task.phase_one(epoch).map(|()| None),
            Phase::Two => task.phase_two(epoch).map(Some),
        }));
        let end_ns = self.now_ns();
        drop(task);
        log.units += 1;
        let channel_id = self.ids[idx];
        if self.trace {
            log.events.push(TraceEvent {
                channel_id,
                phase,
                epoch,
                worker_id: worker,
                start_ns,
                end_ns,
            });
        }
        match outcome {
            Ok(Ok(Some(Progress::Complete))) => self.finished[idx].store(true, Ordering::SeqCst),
            Ok(Ok(_)) => {}
            Ok(Err(e)) => self.fail(e.in_channel(channel_id)),
            Err(payload) => self.fail(
                Error::Internal(format!("task panicked: {}", panic_message(payload.as_ref())))
                    .in_channel(channel_id),
            ),
        }
    }

    fn run_phase(&self, worker: usize, phase: Phase, epoch: u64, log: &mut WorkerLog) {
        if self.stop.load(Ordering::SeqCst) {
            return;
        }
        let active = self.active.read().unwrap_or_else(PoisonError::into_inner);
        match self.plan.schedule {
            Schedule::Static => {
                for pos in static_block(active.len(), self.plan.worker_count, worker) {
                    if self.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    self.execute(active[pos], phase, epoch, worker, log);
                }
            }
            Schedule::Dynamic => {
                let chunk = self.plan.dynamic_chunk;
                let cursor = &self.cursors[phase_index(phase)];
                loop {
                    let start = cursor.fetch_add(chunk, Ordering::SeqCst);
                    if start >= active.len() || self.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    for pos in start..(start + chunk).min(active.len()) {
                        self.execute(active[pos], phase, epoch, worker, log);
                    }
                }
            }
        }
    }

    /// Runs alone between barriers: retires completed channels and decides
    /// whether another epoch follows.
    fn end_epoch(&self) {
        self.epochs_run.fetch_add(1, Ordering::SeqCst);
        let mut active = self.active.write().unwrap_or_else(PoisonError::into_inner);
        active.retain(|&i| !self.finished[i].load(Ordering::SeqCst));
        for c in &self.cursors {
            c.store(0, Ordering::SeqCst);
        }
        if active.is_empty() || self.stop.load(Ordering::SeqCst) {
            self.stop.store(true, Ordering::SeqCst);
            self.done.store(true, Ordering::SeqCst);
        } else {
            self.epoch.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn start_worker(&self, log: &mut WorkerLog) {
        self.spawned.fetch_add(1, Ordering::SeqCst);
        log.priority = Some(os::apply_priority(self.plan.priority_hint));
        log.switches = os::thread_context_switches();
    }

    fn finish_worker(&self, log: &mut WorkerLog) {
        log.switches = match (log.switches, os::thread_context_switches()) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
    }

    fn persistent_worker(&self, worker: usize, barrier: &Barrier, gate: &(Mutex<Gate>, Condvar)) -> WorkerLog {
        let mut log = WorkerLog::default();
        {
            let (lock, cv) = gate;
            let mut g = lock.lock().unwrap_or_else(PoisonError::into_inner);
            while *g == Gate::Wait {
                g = cv.wait(g).unwrap_or_else(PoisonError::into_inner);
            }
            if *g == Gate::Cancel {
                return log;
            }
        }
        self.start_worker(&mut log);
        loop {
            let epoch = self.epoch.load(Ordering::SeqCst);
            self.run_phase(worker, Phase::One, epoch, &mut log);
            barrier.wait();
            self.run_phase(worker, Phase::Two, epoch, &mut log);
            if barrier.wait().is_leader() {
                self.end_epoch();
            }
            barrier.wait();
            if self.done.load(Ordering::SeqCst) {
                break;
            }
        }
        self.finish_worker(&mut log);
        log
    }

    fn run_persistent(&self) -> Result<Vec<WorkerLog>> {
        let w = self.plan.worker_count;
        let barrier = Barrier::new(w);
        let gate = (Mutex::new(Gate::Wait), Condvar::new());
        thread::scope(|scope| {
            let mut handles = Vec::with_capacity(w);
            let mut spawn_error = None;
            for worker in 0..w {
                let (barrier, gate) = (&barrier, &gate);
                let spawned = thread::Builder::new()
                    .name(format!("swgnss-worker-{worker}"))
                    .spawn_scoped(scope, move || self.persistent_worker(worker, barrier, gate));
                match spawned {
                    Ok(h) => handles.push(h),
                    Err(e) => {
                        spawn_error = Some(e);
                        break;
                    }
                }
            }
            {
                let (lock, cv) = &gate;
                *lock.lock().unwrap_or_else(PoisonError::into_inner) =
                    if spawn_error.is_some() { Gate::Cancel } else { Gate::Go };
                cv.notify_all();
            }
            let logs = join_all(handles)?;
            match spawn_error {
                Some(e) => Err(Error::Resource(format!("could not start worker thread: {e}"))),
                None => Ok(logs),
            }
        })
    }

    fn run_fresh_threads(&self) -> Result<Vec<WorkerLog>> {
        let w = self.plan.worker_count;
        let mut logs: Vec<WorkerLog> = (0..w).map(|_| WorkerLog::default()).collect();
        while !self.done.load(Ordering::SeqCst) {
            let epoch = self.epoch.load(Ordering::SeqCst);
            for phase in [Phase::One, Phase::Two] {
                let phase_logs = thread::scope(|scope| {
                    let mut handles = Vec::with_capacity(w);
                    for worker in 0..w {
                        let h = thread::Builder::new()
                            .name(format!("swgnss-worker-{worker}"))
                            .spawn_scoped(scope, move || {
                                let mut log = WorkerLog::default();
                                self.start_worker(&mut log);
                                self.run_phase(worker, phase, epoch, &mut log);
                                self.finish_worker(&mut log);
                                log
                            })
                            .map_err(|e| Error::Resource(format!("could not start worker thread: {e}")));
                        match h {
                            Ok(h) => handles.push(h),
                            Err(e) => {
                                self.fail(e);
                                break;
                            }
                        }
                    }
                    join_all(handles)
                })?;
                for (acc, log) in logs.iter_mut().zip(phase_logs) {
                    merge_log(acc, log);
                }
            }
            self.end_epoch();
        }
        Ok(logs)
    }
}

fn join_all(handles: Vec<thread::ScopedJoinHandle<'_, WorkerLog>>) -> Result<Vec<WorkerLog>> {
    let mut logs = Vec::with_capacity(handles.len());
    for h in handles {
        match h.join() {
            Ok(log) => logs.push(log),
            Err(p) => {
                return Err(Error::Internal(format!(
                    "worker thread panicked: {}",
                    panic_message(p.as_ref())
                )))
            }
        }
    }
    Ok(logs)
}

fn merge_log(acc: &mut WorkerLog, log: WorkerLog) {
    acc.events.extend(log.events);
    acc.units += log.units;
    acc.priority = match (acc.priority.take(), log.priority) {
        (Some(a), Some(b)) => Some(os::combine([a, b])),
        (a, b) => a.or(b),
    };
    acc.switches = match (acc.switches, log.switches) {
        (Some(a), Some(b)) => Some(a + b),
        (a, b) => a.or(b),
    };
}

/// Runs `tasks` in two-phase epochs until every task reports
/// [`Progress::Complete`] or one fails.
///
/// The first failing unit aborts the run; its error is returned wrapped with
/// the channel id. Task state is left as it was when the run stopped.
pub fn run_epochs<T: EpochTask>(tasks: &mut [T], plan: &ExecPlan, record_trace: bool) -> Result<RunReport> {
    plan.validate()?;
    if tasks.is_empty() {
        return Err(Error::invalid("no tasks to run"));
    }
    let n = tasks.len();
    let ids: Vec<u32> = tasks.iter().map(|t| t.channel_id()).collect();
    let shared = Shared {
        slots: tasks.iter_mut().map(Mutex::new).collect(),
        ids,
        finished: (0..n).map(|_| AtomicBool::new(false)).collect(),
        active: RwLock::new((0..n).collect()),
        cursors: [AtomicUsize::new(0), AtomicUsize::new(0)],
        epoch: AtomicU64::new(0),
        epochs_run: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        done: AtomicBool::new(false),
        failure: Mutex::new(None),
        spawned: AtomicUsize::new(0),
        plan: *plan,
        trace: record_trace,
        origin: Instant::now(),
    };
    let logs = if plan.persistent_pool {
        shared.run_persistent()?
    } else {
        shared.run_fresh_threads()?
    };
    let elapsed = shared.origin.elapsed();
    if let Some(err) = shared.failure.into_inner().unwrap_or_else(PoisonError::into_inner) {
        return Err(err);
    }

    let mut units_per_worker = vec![0; plan.worker_count];
    let mut events = Vec::new();
    let mut switches: Option<ContextSwitches> = None;
    let mut priorities = Vec::new();
    for (w, log) in logs.into_iter().enumerate() {
        units_per_worker[w] = log.units;
        events.extend(log.events);
        priorities.extend(log.priority);
        switches = match (switches, log.switches) {
            (Some(a), Some(b)) => Some(a + b),
            (None, b) => b,
            (a, None) => a,
        };
    }
    events.sort_by_key(|e| (e.start_ns, e.worker_id));
    Ok(RunReport {
        epochs: shared.epochs_run.load(Ordering::SeqCst),
        worker_count: plan.worker_count,
        threads_spawned: shared.spawned.load(Ordering::SeqCst),
        priority: os::combine(priorities),
        context_switches: switches,
        units_per_worker,
        elapsed,
        trace: record_trace.then_some(ExecTrace { events }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::verify_ordering;

    struct Counter {
        id: u32,
        epochs: u64,
        seen: Vec<(u64, u8)>,
    }

    impl EpochTask for Counter {
        fn channel_id(&self) -> u32 {
            self.id
        }
        fn phase_one(&mut self, epoch: u64) -> Result<()> {
            self.seen.push((epoch, 1));
            Ok(())
        }
        fn phase_two(&mut self, epoch: u64) -> Result<Progress> {
            self.seen.push((epoch, 2));
            Ok(if epoch + 1 >= self.epochs { Progress::Complete } else { Progress::Continue })
        }
    }

    fn counters(epochs: &[u64]) -> Vec<Counter> {
        epochs
            .iter()
            .enumerate()
            .map(|(i, &e)| Counter {
                id: i as u32,
                epochs: e,
                seen: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn runs_until_every_channel_completes() {
        for plan in [
            ExecPlan::new(3),
            ExecPlan::new(2).with_schedule(Schedule::Static),
            ExecPlan::new(4).with_persistent_pool(false),
        ] {
            let mut tasks = counters(&[1, 4, 2, 4, 3]);
            let report = run_epochs(&mut tasks, &plan, true).unwrap();
            assert_eq!(report.epochs, 4);
            for t in &tasks {
                let expected: Vec<_> = (0..t.epochs).flat_map(|e| [(e, 1), (e, 2)]).collect();
                assert_eq!(t.seen, expected);
            }
            assert!(verify_ordering(report.trace.as_ref().unwrap()).unwrap().is_empty());
            assert_eq!(report.units_per_worker.iter().sum::<u64>(), 2 * (1 + 4 + 2 + 4 + 3));
        }
    }

    #[test]
    fn persistent_pool_spawns_once() {
        let mut tasks = counters(&[5; 6]);
        let r = run_epochs(&mut tasks, &ExecPlan::new(3), false).unwrap();
        assert_eq!(r.threads_spawned, 3);
        let mut tasks = counters(&[5; 6]);
        let r = run_epochs(&mut tasks, &ExecPlan::new(3).with_persistent_pool(false), false).unwrap();
        assert_eq!(r.threads_spawned, 3 * 2 * 5);
    }

    #[test]
    fn empty_task_list_is_rejected() {
        let mut tasks: Vec<Counter> = Vec::new();
        assert!(matches!(run_epochs(&mut tasks, &ExecPlan::new(2), true), Err(Error::InvalidInput(_))));
    }

    struct Failing(u32);

    impl EpochTask for Failing {
        fn channel_id(&self) -> u32 {
            self.0
        }
        fn phase_one(&mut self, epoch: u64) -> Result<()> {
            if self.0 == 2 && epoch == 1 {
                return Err(Error::DegenerateInput("zero correlators".into()));
            }
            if self.0 == 3 && epoch == 2 {
                panic!("boom");
            }
            Ok(())
        }
        fn phase_two(&mut self, _: u64) -> Result<Progress> {
            Ok(Progress::Continue)
        }
    }

    #[test]
    fn first_failure_is_attributed() {
        let mut tasks: Vec<_> = (0..4).map(Failing).collect();
        let err = run_epochs(&mut tasks, &ExecPlan::new(2), false).unwrap_err();
        assert!(matches!(err, Error::Channel { channel: 2, .. }), "{err}");
        let mut tasks: Vec<_> = [0, 1, 3].map(Failing).into_iter().collect();
        let err = run_epochs(&mut tasks, &ExecPlan::new(2), false).unwrap_err();
        assert!(matches!(err, Error::Channel { channel: 3, .. }), "{err}");
    }

    #[test]
    fn zero_workers_is_rejected() {
        let mut tasks = counters(&[1]);
        assert!(matches!(
            run_epochs(&mut tasks, &ExecPlan::new(0), false),
            Err(Error::InvalidConfig(_))
        ));
    }
}
