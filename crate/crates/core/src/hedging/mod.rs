//! Progressive Hedging and its randomized, parallel and asynchronous
//! variants.
//!
//! All four start from `x = 0`, `w = 0` (equivalently `z = 0`). Progressive
//! Hedging keeps `(x, w)` as in its textbook form; the randomized methods
//! keep only `z` and recover `x̃` by projection when a metric row or the
//! final result is produced.

mod async_rph;
mod config;
mod parallel;
mod ph;
mod record;
mod rph;

use std::time::Instant;

pub use async_rph::{solve_rph_async, AsyncState, Event};
pub use config::{
    theorem3_stepsize, Algorithm, AlgorithmConfig, EtaRule, Sampling, SamplingLaw, StoppingCriteria,
};
pub use parallel::{solve_rph_parallel, ParallelState, RoundOutcome};
pub use ph::{solve_ph, PhState};
pub use record::{metrics, relative_suboptimality, LatestUpdates, MetricsRow, ResidualWindow, RunRecord, Termination};
pub use rph::{solve_rph, RphState};

use crate::error::SolveError;
use crate::problem::StochasticProblem;
use crate::runtime::SimClock;

/// Runs `algorithm`; `reference` is the optimal value used for the
/// suboptimality column.
pub fn solve(
    algorithm: Algorithm,
    problem: &StochasticProblem,
    config: &AlgorithmConfig,
    reference: Option<f64>,
) -> Result<RunRecord, SolveError> {
    match algorithm {
        Algorithm::Ph => solve_ph(problem, config, reference),
        Algorithm::Rph => solve_rph(problem, config, reference),
        Algorithm::Parallel => solve_rph_parallel(problem, config, reference),
        Algorithm::Async => solve_rph_async(problem, config, reference),
    }
}

/// Time source of the sequential methods.
enum Clock {
    Real(Instant),
    Simulated(SimClock),
}

impl Clock {
    fn new(config: &AlgorithmConfig) -> Self {
        match &config.schedule {
            Some(schedule) => Self::Simulated(SimClock::new(schedule.clone())),
            None => Self::Real(Instant::now()),
        }
    }

    fn charge(&mut self, scenario: usize) {
        if let Self::Simulated(clock) = self {
            clock.charge(scenario);
        }
    }

    fn seconds(&self) -> f64 {
        match self {
            Self::Real(start) => start.elapsed().as_secs_f64(),
            Self::Simulated(clock) => clock.seconds(),
        }
    }
}
