use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, AlgorithmConfig, SamplingLaw};
use super::record::{Monitor, RunRecord, Termination};
use super::rph::RandomizedCore;
use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::rng;
use crate::runtime::{Completion, PoolMode, TaskMessage, WorkerContext, WorkerPool};

pub(crate) fn pool_for(problem: &StochasticProblem, config: &AlgorithmConfig) -> Result<WorkerPool, SolveError> {
    let ctx = WorkerContext {
        problems: Arc::new(problem.scenarios().to_vec()),
        mu: config.mu,
        settings: config.prox.clone(),
    };
    let mode = match &config.schedule {
        Some(schedule) => PoolMode::Simulated(schedule.clone()),
        None => PoolMode::Real,
    };
    WorkerPool::new(config.workers, mode, ctx)
}

/// Outcome of one synchronous round.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundOutcome {
    /// Scenarios updated, in draw order after removing duplicates.
    Applied(Vec<usize>),
    WorkerFailed { worker: usize, scenario: usize, message: String },
}

/// Synchronous parallel randomized PH: each round draws `M` scenarios,
/// solves the distinct ones concurrently from one snapshot of `z`, and
/// applies all updates after the barrier.
pub struct ParallelState<'a> {
    core: RandomizedCore<'a>,
    law: SamplingLaw,
    rng: ChaCha8Rng,
    pool: WorkerPool,
    batch: usize,
    rounds: u64,
}

impl<'a> ParallelState<'a> {
    pub fn new(problem: &'a StochasticProblem, config: &AlgorithmConfig) -> Result<Self, SolveError> {
        Ok(Self {
            core: RandomizedCore::new(problem, config),
            law: config.sampling.resolve(problem.tree())?,
            rng: rng::scenario_stream(config.seed),
            pool: pool_for(problem, config)?,
            batch: config.workers,
            rounds: 0,
        })
    }

    pub fn set_z(&mut self, z: IterateMatrix) -> Result<(), SolveError> {
        self.core.problem.tree().check_iterate(&z)?;
        self.core.z = z;
        Ok(())
    }

    pub fn z(&self) -> &IterateMatrix {
        &self.core.z
    }

    pub fn round(&mut self) -> Result<RoundOutcome, SolveError> {
        let draws: Vec<usize> = (0..self.batch).map(|_| self.law.draw(&mut self.rng)).collect();
        self.round_with(&draws)
    }

    /// One round on the given draws (duplicates are solved once).
    pub fn round_with(&mut self, draws: &[usize]) -> Result<RoundOutcome, SolveError> {
        let mut scenarios: Vec<usize> = Vec::with_capacity(draws.len());
        for &s in draws {
            self.core.problem.tree().check_scenario(s)?;
            if !scenarios.contains(&s) {
                scenarios.push(s);
            }
        }
        if scenarios.len() > self.pool.workers() {
            return Err(SolveError::Config(format!(
                "{} distinct scenarios in a round with {} workers",
                scenarios.len(),
                self.pool.workers()
            )));
        }
        let epoch = self.core.n_subproblems;
        let mut snapshots = Vec::with_capacity(scenarios.len());
        for (i, &s) in scenarios.iter().enumerate() {
            let (x, v) = self.core.anchor(s)?;
            self.pool.dispatch(i, TaskMessage { scenario: s, point: v, dispatch_epoch: epoch })?;
            snapshots.push(x);
        }
        let mut results: Vec<Option<Vec<f64>>> = vec![None; scenarios.len()];
        let mut failure = None;
        while let Some(completion) = self.pool.next_completion()? {
            match completion {
                Completion::Done(r) => {
                    let y = r.result.into_minimizer(r.scenario)?;
                    results[r.worker] = Some(y);
                }
                Completion::Poisoned { worker, scenario, reason, .. } => {
                    failure.get_or_insert((worker, scenario, reason));
                }
            }
        }
        if let Some((worker, scenario, message)) = failure {
            return Ok(RoundOutcome::WorkerFailed { worker, scenario, message });
        }
        for (i, &s) in scenarios.iter().enumerate() {
            let y = results[i].take().expect("every task completed");
            self.core.apply(s, 1.0, &y, &snapshots[i]);
        }
        self.rounds += 1;
        Ok(RoundOutcome::Applied(scenarios))
    }
}

pub fn solve_rph_parallel(
    problem: &StochasticProblem,
    config: &AlgorithmConfig,
    reference: Option<f64>,
) -> Result<RunRecord, SolveError> {
    config.validate(problem.tree())?;
    let mut state = ParallelState::new(problem, config)?;
    let mut monitor = Monitor::new(problem, &config.stopping, reference);

    let termination = loop {
        let outcome = state.round()?;
        let time = state.pool.elapsed_seconds();
        if let RoundOutcome::WorkerFailed { worker, scenario, message } = outcome {
            state.core.maybe_emit(&mut monitor, time, state.rounds, true)?;
            break Termination::WorkerFailure { worker, scenario, message };
        }
        state.core.maybe_emit(&mut monitor, time, state.rounds, false)?;
        if let Some(t) = state.core.check(&monitor, time) {
            state.core.maybe_emit(&mut monitor, time, state.rounds, true)?;
            break t;
        }
    };
    let elapsed = state.pool.elapsed_seconds();
    let rounds = state.rounds;
    state.core.finish(Algorithm::Parallel, monitor, termination, rounds, elapsed)
}
