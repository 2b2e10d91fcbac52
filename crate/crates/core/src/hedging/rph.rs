use rand_chacha::ChaCha8Rng;

use super::config::{Algorithm, AlgorithmConfig, SamplingLaw};
use super::record::{LatestUpdates, Monitor, ResidualWindow, RunRecord, Termination};
use super::Clock;
use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::prox::{ProxSettings, ProxWorkspace};
use crate::rng;

/// State shared by the randomized methods: the splitting variable `z`, the
/// last prox output of every scenario and the residual window. All row
/// updates go through [`RandomizedCore::apply`].
#[derive(Debug)]
pub(crate) struct RandomizedCore<'a> {
    pub problem: &'a StochasticProblem,
    pub z: IterateMatrix,
    pub y: IterateMatrix,
    pub window: ResidualWindow,
    pub latest: LatestUpdates,
    pub n_subproblems: u64,
    pub updates: Vec<usize>,
    z_sq: f64,
    cadence: u64,
}

impl<'a> RandomizedCore<'a> {
    pub fn new(problem: &'a StochasticProblem, config: &AlgorithmConfig) -> Self {
        Self {
            problem,
            z: problem.zeros(),
            y: problem.zeros(),
            window: ResidualWindow::new(config.window(problem.num_scenarios())),
            latest: LatestUpdates::new(problem.num_scenarios()),
            n_subproblems: 0,
            updates: Vec::new(),
            z_sq: 0.0,
            cadence: problem.num_scenarios() as u64,
        }
    }

    /// Anchor `2x^s − z^s` of scenario `s` and the projected row `x^s`.
    pub fn anchor(&self, s: usize) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let x = self.problem.tree().project_scenario(&self.z, s)?;
        let v = x.iter().zip(self.z.row(s)).map(|(x, z)| 2.0 * x - z).collect();
        Ok((x, v))
    }

    /// `z^s += factor · (y − x)`.
    pub fn apply(&mut self, s: usize, factor: f64, y: &[f64], x: &[f64]) {
        let row = self.z.row_mut(s);
        let mut old_sq = 0.0;
        let mut new_sq = 0.0;
        let mut delta_sq = 0.0;
        for ((zj, yj), xj) in row.iter_mut().zip(y).zip(x) {
            let d = factor * (yj - xj);
            old_sq += *zj * *zj;
            *zj += d;
            new_sq += *zj * *zj;
            delta_sq += d * d;
        }
        self.z_sq += new_sq - old_sq;
        self.y.set_row(s, y);
        self.window.push(delta_sq);
        self.latest.push(s, delta_sq);
        self.n_subproblems += 1;
        self.updates.push(s);
    }

    /// Whether the windowed residual meets the tolerance, and so does the
    /// latest update of every scenario.
    pub fn converged(&self, monitor: &Monitor<'_>) -> bool {
        let z_norm = self.z_sq.max(0.0).sqrt();
        self.window.is_full()
            && self.latest.complete()
            && monitor.residual_met(self.window.value(), z_norm)
            && monitor.residual_met(self.latest.value(), z_norm)
    }

    /// Emits a row if another `S` subproblems were solved since the last one
    /// (or `force`).
    pub fn maybe_emit(
        &mut self,
        monitor: &mut Monitor<'_>,
        time: f64,
        iteration: u64,
        force: bool,
    ) -> Result<(), SolveError> {
        let last = monitor.last_emitted().unwrap_or(0);
        let due = self.n_subproblems / self.cadence > last / self.cadence;
        if (due || force) && monitor.last_emitted() != Some(self.n_subproblems) {
            let x = self.problem.tree().project_nonanticipative(&self.z)?;
            self.z_sq = self.z.frobenius_norm().powi(2);
            monitor.emit(time, iteration, self.n_subproblems, self.window.value(), &x, &self.y)?;
        }
        Ok(())
    }

    pub fn check(&self, monitor: &Monitor<'_>, time: f64) -> Option<Termination> {
        if self.converged(monitor) {
            return Some(Termination::Residual);
        }
        monitor.limit(time, self.n_subproblems)
    }

    pub fn finish(
        self,
        algorithm: Algorithm,
        monitor: Monitor<'_>,
        termination: Termination,
        iterations: u64,
        elapsed: f64,
    ) -> Result<RunRecord, SolveError> {
        let x = self.problem.tree().project_nonanticipative(&self.z)?;
        Ok(RunRecord {
            algorithm,
            rows: monitor.rows,
            objective: self.problem.expected_cost(&x)?,
            x,
            z: self.z,
            y: self.y,
            termination,
            iterations,
            n_subproblems: self.n_subproblems,
            updates: self.updates,
            delays: None,
            elapsed_seconds: elapsed,
        })
    }
}

/// Randomized Progressive Hedging iterate.
#[derive(Debug)]
pub struct RphState<'a> {
    core: RandomizedCore<'a>,
    law: SamplingLaw,
    rng: ChaCha8Rng,
    mu: f64,
    settings: ProxSettings,
    workspaces: Vec<ProxWorkspace>,
    iterations: u64,
}

impl<'a> RphState<'a> {
    pub fn new(problem: &'a StochasticProblem, config: &AlgorithmConfig) -> Result<Self, SolveError> {
        Ok(Self {
            core: RandomizedCore::new(problem, config),
            law: config.sampling.resolve(problem.tree())?,
            rng: rng::scenario_stream(config.seed),
            mu: config.mu,
            settings: config.prox.clone(),
            workspaces: ProxWorkspace::batch(problem.num_scenarios()),
            iterations: 0,
        })
    }

    /// Replaces `z` (test hook for starting away from zero).
    pub fn set_z(&mut self, z: IterateMatrix) -> Result<(), SolveError> {
        self.core.problem.tree().check_iterate(&z)?;
        self.core.z_sq = z.frobenius_norm().powi(2);
        self.core.z = z;
        Ok(())
    }

    pub fn z(&self) -> &IterateMatrix {
        &self.core.z
    }

    pub fn y(&self) -> &IterateMatrix {
        &self.core.y
    }

    /// Draws a scenario and updates it; returns the scenario.
    pub fn step(&mut self) -> Result<usize, SolveError> {
        let s = self.law.draw(&mut self.rng);
        self.step_with(s)?;
        Ok(s)
    }

    /// One update of scenario `s` without drawing.
    pub fn step_with(&mut self, s: usize) -> Result<(), SolveError> {
        self.core.problem.tree().check_scenario(s)?;
        let (x, v) = self.core.anchor(s)?;
        let y = self.workspaces[s].solve(self.core.problem.scenario(s), &v, self.mu, &self.settings).into_minimizer(s)?;
        self.core.apply(s, 1.0, &y, &x);
        self.iterations += 1;
        Ok(())
    }
}

/// Randomized Progressive Hedging from `z = 0`.
pub fn solve_rph(
    problem: &StochasticProblem,
    config: &AlgorithmConfig,
    reference: Option<f64>,
) -> Result<RunRecord, SolveError> {
    config.validate(problem.tree())?;
    let mut state = RphState::new(problem, config)?;
    let mut clock = Clock::new(config);
    let mut monitor = Monitor::new(problem, &config.stopping, reference);

    let termination = loop {
        let s = state.step()?;
        clock.charge(s);
        let time = clock.seconds();
        state.core.maybe_emit(&mut monitor, time, state.iterations, false)?;
        if let Some(t) = state.core.check(&monitor, time) {
            state.core.maybe_emit(&mut monitor, time, state.iterations, true)?;
            break t;
        }
    };
    let iterations = state.iterations;
    state.core.finish(Algorithm::Rph, monitor, termination, iterations, clock.seconds())
}
