use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::panic::{self, AssertUnwindSafe};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::messages::{Completion, ResultMessage, TaskMessage};
use super::schedule::SimSchedule;
use crate::error::SolveError;
use crate::prox::{ProxSettings, ProxWorkspace, QpScenarioProblem};

#[derive(Debug, Clone, PartialEq)]
pub enum PoolMode {
    /// One OS thread per worker.
    Real,
    /// Deterministic discrete-event simulation.
    Simulated(SimSchedule),
}

/// What every worker evaluates: the scenario problems and prox parameters.
#[derive(Debug, Clone)]
pub struct WorkerContext {
    pub problems: Arc<Vec<QpScenarioProblem>>,
    pub mu: f64,
    pub settings: ProxSettings,
}

/// Warm-start caches of one worker, keyed by scenario.
#[derive(Debug, Default)]
struct WorkerCache {
    workspaces: HashMap<usize, ProxWorkspace>,
}

impl WorkerCache {
    fn run(&mut self, ctx: &WorkerContext, worker: usize, task: TaskMessage, sequence: u64, fault: bool) -> Completion {
        let scenario = task.scenario;
        let dispatch_epoch = task.dispatch_epoch;
        let ws = self.workspaces.entry(scenario).or_default();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
            if fault {
                panic!("injected fault on dispatch {sequence}");
            }
            ws.solve(&ctx.problems[scenario], &task.point, ctx.mu, &ctx.settings)
        }));
        match outcome {
            Ok(result) => Completion::Done(ResultMessage { worker, scenario, dispatch_epoch, sequence, result }),
            Err(payload) => {
                self.workspaces.remove(&scenario);
                let reason = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "worker panicked".into());
                Completion::Poisoned { worker, scenario, dispatch_epoch, sequence, reason }
            }
        }
    }
}

/// Master–worker pool. The master dispatches one task at a time to an idle
/// worker and collects completions one by one; every dispatched task yields
/// exactly one completion.
pub struct WorkerPool {
    live: Vec<bool>,
    busy: Vec<bool>,
    in_flight: usize,
    next_sequence: u64,
    backend: Backend,
}

enum Backend {
    Simulated(SimBackend),
    Real(RealBackend),
}

struct SimBackend {
    ctx: WorkerContext,
    schedule: SimSchedule,
    rngs: Vec<ChaCha8Rng>,
    caches: Vec<WorkerCache>,
    now: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    pending: HashMap<u64, Completion>,
}

struct Job {
    task: TaskMessage,
    sequence: u64,
    fault: bool,
}

struct RealBackend {
    start: Instant,
    senders: Vec<Option<Sender<Job>>>,
    receiver: Receiver<Completion>,
    handles: Vec<JoinHandle<()>>,
    faults: Vec<u64>,
    /// Logical time (ns) of the last received completion.
    logical_now: u64,
    dispatched_at: HashMap<u64, u64>,
    trace: Vec<Option<u64>>,
}

impl std::fmt::Debug for WorkerPool {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WorkerPool")
            .field("workers", &self.live.len())
            .field("in_flight", &self.in_flight)
            .field("simulated", &matches!(self.backend, Backend::Simulated(_)))
            .finish()
    }
}

impl WorkerPool {
    pub fn new(workers: usize, mode: PoolMode, ctx: WorkerContext) -> Result<Self, SolveError> {
        if workers == 0 {
            return Err(SolveError::Config("the pool needs at least one worker".into()));
        }
        let backend = match mode {
            PoolMode::Simulated(schedule) => {
                schedule.validate(ctx.problems.len())?;
                Backend::Simulated(SimBackend {
                    rngs: (0..workers).map(|w| schedule.worker_rng(w)).collect(),
                    caches: (0..workers).map(|_| WorkerCache::default()).collect(),
                    schedule,
                    ctx,
                    now: 0,
                    queue: BinaryHeap::new(),
                    pending: HashMap::new(),
                })
            }
            PoolMode::Real => Backend::Real(RealBackend::spawn(workers, ctx, Vec::new())?),
        };
        Ok(Self { live: vec![true; workers], busy: vec![false; workers], in_flight: 0, next_sequence: 0, backend })
    }

    /// Real-mode pool whose tasks with the given dispatch numbers fail.
    pub fn real_with_faults(workers: usize, ctx: WorkerContext, faults: Vec<u64>) -> Result<Self, SolveError> {
        if workers == 0 {
            return Err(SolveError::Config("the pool needs at least one worker".into()));
        }
        let backend = Backend::Real(RealBackend::spawn(workers, ctx, faults)?);
        Ok(Self { live: vec![true; workers], busy: vec![false; workers], in_flight: 0, next_sequence: 0, backend })
    }

    pub fn workers(&self) -> usize {
        self.live.len()
    }

    pub fn live_workers(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }

    pub fn is_live(&self, worker: usize) -> bool {
        self.live[worker]
    }

    pub fn is_idle(&self, worker: usize) -> bool {
        self.live[worker] && !self.busy[worker]
    }

    pub fn idle_workers(&self) -> Vec<usize> {
        (0..self.workers()).filter(|&w| self.is_idle(w)).collect()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn is_simulated(&self) -> bool {
        matches!(self.backend, Backend::Simulated(_))
    }

    /// Sends `task` to the idle live `worker`; returns its dispatch number.
    pub fn dispatch(&mut self, worker: usize, task: TaskMessage) -> Result<u64, SolveError> {
        if worker >= self.workers() || !self.is_idle(worker) {
            return Err(SolveError::Runtime(format!("worker {worker} is not available for dispatch")));
        }
        if task.point.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::Runtime(format!("non-finite task point for scenario {}", task.scenario)));
        }
        let sequence = self.next_sequence;
        match &mut self.backend {
            Backend::Simulated(sim) => {
                if task.scenario >= sim.ctx.problems.len() {
                    return Err(SolveError::Runtime(format!("task scenario {} out of range", task.scenario)));
                }
                let duration = sim.schedule.duration(sequence, task.scenario, &mut sim.rngs[worker]);
                let fault = sim.schedule.is_fault(sequence);
                let completion = sim.caches[worker].run(&sim.ctx, worker, task, sequence, fault);
                sim.queue.push(Reverse((sim.now.saturating_add(duration), sequence)));
                sim.pending.insert(sequence, completion);
            }
            Backend::Real(real) => {
                let fault = real.faults.contains(&sequence);
                let sender = real.senders[worker].as_ref().expect("live worker has a channel");
                real.dispatched_at.insert(sequence, real.logical_now);
                if real.trace.len() <= sequence as usize {
                    real.trace.resize(sequence as usize + 1, None);
                }
                sender
                    .send(Job { task, sequence, fault })
                    .map_err(|_| SolveError::Runtime(format!("worker {worker} hung up")))?;
            }
        }
        self.next_sequence += 1;
        self.busy[worker] = true;
        self.in_flight += 1;
        Ok(sequence)
    }

    /// Blocks until some worker finishes; `None` when nothing is in flight.
    pub fn next_completion(&mut self) -> Result<Option<Completion>, SolveError> {
        if self.in_flight == 0 {
            return Ok(None);
        }
        let completion = match &mut self.backend {
            Backend::Simulated(sim) => {
                let Reverse((finish, sequence)) = sim.queue.pop().expect("in-flight task is queued");
                sim.now = finish;
                sim.pending.remove(&sequence).expect("queued task has a completion")
            }
            Backend::Real(real) => {
                let completion = real
                    .receiver
                    .recv()
                    .map_err(|_| SolveError::Runtime("all workers disconnected".into()))?;
                let elapsed = real.start.elapsed().as_nanos().min(u64::MAX as u128 / 8) as u64;
                real.logical_now = elapsed.max(real.logical_now + 1);
                let sequence = completion.sequence();
                let sent = real.dispatched_at.remove(&sequence).unwrap_or(0);
                real.trace[sequence as usize] = Some(real.logical_now - sent);
                completion
            }
        };
        self.busy[completion.worker()] = false;
        self.in_flight -= 1;
        Ok(Some(completion))
    }

    /// Takes `worker` out of service. It must be idle.
    pub fn retire(&mut self, worker: usize) {
        assert!(!self.busy[worker], "cannot retire a busy worker");
        self.live[worker] = false;
        if let Backend::Real(real) = &mut self.backend {
            real.senders[worker] = None;
        }
    }

    /// Seconds since creation: simulated ticks times the tick length, or
    /// wall-clock time.
    pub fn elapsed_seconds(&self) -> f64 {
        match &self.backend {
            Backend::Simulated(sim) => sim.now as f64 * sim.schedule.tick_seconds,
            Backend::Real(real) => real.start.elapsed().as_secs_f64(),
        }
    }

    /// Simulated time in ticks (0 in real mode).
    pub fn now_ticks(&self) -> u64 {
        match &self.backend {
            Backend::Simulated(sim) => sim.now,
            Backend::Real(_) => 0,
        }
    }

    /// Per-dispatch durations in nanoseconds measured from the logical
    /// dispatch time, in dispatch order; tasks still running are `None`.
    /// Replaying it with [`SimSchedule::from_trace`] reproduces the
    /// completion order.
    pub fn trace(&self) -> Vec<Option<u64>> {
        match &self.backend {
            Backend::Simulated(_) => Vec::new(),
            Backend::Real(real) => real.trace.clone(),
        }
    }
}

impl RealBackend {
    fn spawn(workers: usize, ctx: WorkerContext, faults: Vec<u64>) -> Result<Self, SolveError> {
        let (done_tx, receiver) = mpsc::channel();
        let mut senders = Vec::with_capacity(workers);
        let mut handles = Vec::with_capacity(workers);
        for worker in 0..workers {
            let (tx, rx) = mpsc::channel::<Job>();
            let done = done_tx.clone();
            let ctx = ctx.clone();
            let handle = thread::Builder::new()
                .name(format!("prox-worker-{worker}"))
                .spawn(move || {
                    let mut cache = WorkerCache::default();
                    while let Ok(job) = rx.recv() {
                        let completion = cache.run(&ctx, worker, job.task, job.sequence, job.fault);
                        if done.send(completion).is_err() {
                            break;
                        }
                    }
                })
                .map_err(|e| SolveError::Runtime(format!("cannot spawn worker {worker}: {e}")))?;
            senders.push(Some(tx));
            handles.push(handle);
        }
        Ok(Self {
            start: Instant::now(),
            senders,
            receiver,
            handles,
            faults,
            logical_now: 0,
            dispatched_at: HashMap::new(),
            trace: Vec::new(),
        })
    }
}

impl Drop for RealBackend {
    fn drop(&mut self) {
        self.senders.clear();
        // Workers exit once their channel closes; a task still running
        // finishes first and its completion is discarded.
        while self.receiver.try_recv().is_ok() {}
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}
