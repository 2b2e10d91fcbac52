use std::thread;

use super::config::{Algorithm, AlgorithmConfig};
use super::record::{Monitor, RunRecord, Termination};
use super::Clock;
use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::prox::{ProxSettings, ProxWorkspace};

/// Iterate of Progressive Hedging: the non-anticipative point `x`, the
/// multipliers `w` and the last prox outputs `y`.
#[derive(Debug)]
pub struct PhState<'a> {
    problem: &'a StochasticProblem,
    mu: f64,
    settings: ProxSettings,
    threads: usize,
    x: IterateMatrix,
    w: IterateMatrix,
    y: IterateMatrix,
    workspaces: Vec<ProxWorkspace>,
    iterations: u64,
}

impl<'a> PhState<'a> {
    /// Starts from `x = 0`, `w = 0`.
    pub fn new(problem: &'a StochasticProblem, config: &AlgorithmConfig) -> Self {
        Self::from_parts(problem, config, problem.zeros(), problem.zeros())
    }

    /// Starts from a given `x ∈ W` and `w ∈ W⊥`.
    pub fn from_parts(
        problem: &'a StochasticProblem,
        config: &AlgorithmConfig,
        x: IterateMatrix,
        w: IterateMatrix,
    ) -> Self {
        let threads = if config.schedule.is_none() { config.workers.min(problem.num_scenarios()) } else { 1 };
        Self {
            problem,
            mu: config.mu,
            settings: config.prox.clone(),
            threads,
            x,
            w,
            y: problem.zeros(),
            workspaces: ProxWorkspace::batch(problem.num_scenarios()),
            iterations: 0,
        }
    }

    pub fn x(&self) -> &IterateMatrix {
        &self.x
    }

    pub fn w(&self) -> &IterateMatrix {
        &self.w
    }

    pub fn y(&self) -> &IterateMatrix {
        &self.y
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// `z = x + μw`.
    pub fn z(&self) -> IterateMatrix {
        self.x.add_scaled(self.mu, &self.w).expect("same shape")
    }

    /// One iteration; returns `‖z⁺ − z‖_F`.
    pub fn step(&mut self) -> Result<f64, SolveError> {
        let mu = self.mu;
        let anchors = self.x.add_scaled(-mu, &self.w)?;
        self.y = self.prox_all(&anchors)?;
        let x_next = self.problem.tree().project_nonanticipative(&self.y)?;
        let mut w_next = self.w.clone();
        for ((w, y), x) in w_next.as_mut_slice().iter_mut().zip(self.y.as_slice()).zip(x_next.as_slice()) {
            *w += (y - x) / mu;
        }
        let mut step_sq = 0.0;
        for (((x0, w0), x1), w1) in
            self.x.as_slice().iter().zip(self.w.as_slice()).zip(x_next.as_slice()).zip(w_next.as_slice())
        {
            let d = (x1 + mu * w1) - (x0 + mu * w0);
            step_sq += d * d;
        }
        self.x = x_next;
        self.w = w_next;
        self.iterations += 1;
        Ok(step_sq.sqrt())
    }

    fn prox_all(&mut self, anchors: &IterateMatrix) -> Result<IterateMatrix, SolveError> {
        let problem = self.problem;
        let (mu, settings) = (self.mu, &self.settings);
        let n = problem.dim();
        let mut out = problem.zeros();
        if self.threads <= 1 {
            for (s, ws) in self.workspaces.iter_mut().enumerate() {
                let row = ws.solve(problem.scenario(s), anchors.row(s), mu, settings).into_minimizer(s)?;
                out.set_row(s, &row);
            }
            return Ok(out);
        }
        let chunk = problem.num_scenarios().div_ceil(self.threads);
        let results: Vec<Result<(), SolveError>> = thread::scope(|scope| {
            let handles: Vec<_> = self
                .workspaces
                .chunks_mut(chunk)
                .zip(out.as_mut_slice().chunks_mut(chunk * n))
                .enumerate()
                .map(|(c, (wss, rows))| {
                    scope.spawn(move || {
                        for (k, (ws, row)) in wss.iter_mut().zip(rows.chunks_mut(n)).enumerate() {
                            let s = c * chunk + k;
                            let y = ws.solve(problem.scenario(s), anchors.row(s), mu, settings).into_minimizer(s)?;
                            row.copy_from_slice(&y);
                        }
                        Ok(())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(prox_panic()))).collect()
        });
        results.into_iter().collect::<Result<Vec<()>, _>>()?;
        Ok(out)
    }
}

fn prox_panic() -> SolveError {
    SolveError::Runtime("a prox thread panicked".into())
}

/// Progressive Hedging from `x = 0`, `w = 0`.
pub fn solve_ph(
    problem: &StochasticProblem,
    config: &AlgorithmConfig,
    reference: Option<f64>,
) -> Result<RunRecord, SolveError> {
    config.validate(problem.tree())?;
    let mut state = PhState::new(problem, config);
    let mut clock = Clock::new(config);
    let mut monitor = Monitor::new(problem, &config.stopping, reference);
    let num_scenarios = problem.num_scenarios() as u64;
    let mut n_subproblems = 0u64;

    let termination = loop {
        let step = state.step()?;
        for s in 0..problem.num_scenarios() {
            clock.charge(s);
        }
        n_subproblems += num_scenarios;
        let time = clock.seconds();
        monitor.emit(time, state.iterations, n_subproblems, step, &state.x, &state.y)?;
        if monitor.residual_met(step, state.z().frobenius_norm()) {
            break Termination::Residual;
        }
        if let Some(t) = monitor.limit(time, n_subproblems) {
            break t;
        }
    };

    let z = state.z();
    Ok(RunRecord {
        algorithm: Algorithm::Ph,
        rows: monitor.rows,
        objective: problem.expected_cost(&state.x)?,
        x: state.x,
        z,
        y: state.y,
        termination,
        iterations: state.iterations,
        n_subproblems,
        updates: Vec::new(),
        delays: None,
        elapsed_seconds: clock.seconds(),
    })
}
