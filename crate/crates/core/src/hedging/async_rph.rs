use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, AlgorithmConfig, EtaRule, SamplingLaw};
use super::parallel::pool_for;
use super::record::{Monitor, RunRecord, Termination};
use super::rph::RandomizedCore;
use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::rng;
use crate::runtime::{Completion, DelayStats, TaskMessage, WorkerPool};

/// Asynchronous randomized PH master loop.
///
/// Every worker always holds one task. When worker `i` finishes, its result
/// is applied as `z^s += (2η / (S q_s)) (ŷ − x̄[i])` with `x̄[i]` the
/// projected row taken when the task was sent, then `i` gets a freshly drawn
/// scenario anchored at the current `z`. The update counter `k` is the
/// epoch used for delays.
pub struct AsyncState<'a> {
    core: RandomizedCore<'a>,
    law: SamplingLaw,
    eta: EtaRule,
    rng: ChaCha8Rng,
    pool: WorkerPool,
    snapshots: Vec<Vec<f64>>,
    delays: DelayStats,
    epoch: u64,
}

/// What one completion did.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Updated { worker: usize, scenario: usize, delay: u64 },
    Retired { worker: usize, scenario: usize, message: String },
    /// No worker is left.
    Exhausted,
}

impl<'a> AsyncState<'a> {
    pub fn new(problem: &'a StochasticProblem, config: &AlgorithmConfig) -> Result<Self, SolveError> {
        let mut state = Self {
            core: RandomizedCore::new(problem, config),
            law: config.sampling.resolve(problem.tree())?,
            eta: config.eta,
            rng: rng::scenario_stream(config.seed),
            pool: pool_for(problem, config)?,
            snapshots: vec![Vec::new(); config.workers],
            delays: DelayStats::new(),
            epoch: 0,
        };
        for worker in 0..config.workers {
            state.redispatch(worker)?;
        }
        Ok(state)
    }

    /// Sends `worker` a freshly drawn scenario anchored at the current `z`.
    pub fn redispatch(&mut self, worker: usize) -> Result<(), SolveError> {
        let s = self.law.draw(&mut self.rng);
        let (x, v) = self.core.anchor(s)?;
        self.snapshots[worker] = x;
        self.pool.dispatch(worker, TaskMessage { scenario: s, point: v, dispatch_epoch: self.epoch })?;
        Ok(())
    }

    pub fn delays(&self) -> &DelayStats {
        &self.delays
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    pub fn z(&self) -> &IterateMatrix {
        &self.core.z
    }

    pub fn updates(&self) -> &[usize] {
        &self.core.updates
    }

    /// Processes the next completion. The worker stays idle until
    /// [`AsyncState::redispatch`].
    pub fn advance(&mut self) -> Result<Event, SolveError> {
        let Some(completion) = self.pool.next_completion()? else {
            return Ok(Event::Exhausted);
        };
        match completion {
            Completion::Done(r) => {
                let s = r.scenario;
                let y = r.result.into_minimizer(s)?;
                let delay = self.delays.record(r.dispatch_epoch, self.epoch);
                let eta = self.eta.eta(&self.law, s);
                let factor = 2.0 * eta / (self.law.q().len() as f64 * self.law.q()[s]);
                let x = std::mem::take(&mut self.snapshots[r.worker]);
                self.core.apply(s, factor, &y, &x);
                self.epoch += 1;
                Ok(Event::Updated { worker: r.worker, scenario: s, delay })
            }
            Completion::Poisoned { worker, scenario, reason, .. } => {
                log::warn!("worker {worker} failed on scenario {scenario}: {reason}; retiring it");
                self.pool.retire(worker);
                Ok(Event::Retired { worker, scenario, message: reason })
            }
        }
    }
}

pub fn solve_rph_async(
    problem: &StochasticProblem,
    config: &AlgorithmConfig,
    reference: Option<f64>,
) -> Result<RunRecord, SolveError> {
    config.validate(problem.tree())?;
    let mut state = AsyncState::new(problem, config)?;
    let mut monitor = Monitor::new(problem, &config.stopping, reference);
    let mut last_failure = None;

    let termination = loop {
        let event = state.advance()?;
        let time = state.pool.elapsed_seconds();
        match event {
            Event::Updated { worker, .. } => {
                state.core.maybe_emit(&mut monitor, time, state.epoch, false)?;
                if let Some(t) = state.core.check(&monitor, time) {
                    state.core.maybe_emit(&mut monitor, time, state.epoch, true)?;
                    break t;
                }
                state.redispatch(worker)?;
            }
            Event::Retired { worker, scenario, message } => {
                last_failure = Some(Termination::WorkerFailure { worker, scenario, message });
                if state.pool.live_workers() == 0 {
                    state.core.maybe_emit(&mut monitor, time, state.epoch, true)?;
                    break last_failure.take().expect("just set");
                }
            }
            Event::Exhausted => {
                break last_failure.take().unwrap_or_else(|| {
                    Termination::WorkerFailure { worker: 0, scenario: 0, message: "no task in flight".into() }
                });
            }
        }
    };
    let elapsed = state.pool.elapsed_seconds();
    let epoch = state.epoch;
    let delays = std::mem::take(&mut state.delays);
    let mut record = state.core.finish(Algorithm::Async, monitor, termination, epoch, elapsed)?;
    record.delays = Some(delays);
    Ok(record)
}
