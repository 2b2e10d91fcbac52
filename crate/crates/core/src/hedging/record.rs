use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, StoppingCriteria};
use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::runtime::DelayStats;

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub wall_time_s: f64,
    pub iteration: u64,
    pub n_subproblems: u64,
    pub steplength: f64,
    pub subopt_rel: Option<f64>,
    pub feas_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum Termination {
    Residual,
    MaxTime,
    MaxSubproblems,
    WorkerFailure { worker: usize, scenario: usize, message: String },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Residual => "residual",
            Self::MaxTime => "max-time",
            Self::MaxSubproblems => "max-subproblems",
            Self::WorkerFailure { .. } => "worker-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub rows: Vec<MetricsRow>,
    /// Final non-anticipative iterate.
    pub x: IterateMatrix,
    /// Final splitting variable `z = x + μw` (for PH) or the randomized `z`.
    pub z: IterateMatrix,
    /// Last prox output of every scenario.
    pub y: IterateMatrix,
    /// `Σ_s p_s f̃^s(x^s)`.
    pub objective: f64,
    pub termination: Termination,
    pub iterations: u64,
    pub n_subproblems: u64,
    /// Scenario of every single-scenario update, in application order
    /// (empty for PH).
    pub updates: Vec<usize>,
    pub delays: Option<DelayStats>,
    pub elapsed_seconds: f64,
}

impl RunRecord {
    pub fn tau_obs(&self) -> Option<u64> {
        self.delays.as_ref().and_then(|d| d.measure_tau().ok())
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

/// `(f̃(x̃) − f*) / |f*|`, or the absolute gap when `f* = 0`.
pub fn relative_suboptimality(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value
    } else {
        (value - reference) / reference.abs()
    }
}

/// `(subopt_rel, feas_err)` of `x` given the last prox outputs `y`.
pub fn metrics(
    problem: &StochasticProblem,
    x: &IterateMatrix,
    y: &IterateMatrix,
    reference: Option<f64>,
) -> Result<(Option<f64>, f64), SolveError> {
    problem.tree().check_iterate(x)?;
    problem.tree().check_iterate(y)?;
    let subopt = match reference {
        Some(f_star) => Some(relative_suboptimality(problem.expected_cost(x)?, f_star)),
        None => None,
    };
    let feas = (0..x.rows())
        .map(|s| x.row(s).iter().zip(y.row(s)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok((subopt, feas))
}

/// Residual of the randomized methods: the root of the summed squared norms
/// of the most recent `capacity` single-scenario updates.
#[derive(Debug, Clone)]
pub struct ResidualWindow {
    capacity: usize,
    recent: VecDeque<f64>,
    sum: f64,
    pushes: usize,
}

impl ResidualWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, recent: VecDeque::with_capacity(capacity), sum: 0.0, pushes: 0 }
    }

    pub fn push(&mut self, squared_norm: f64) {
        if self.recent.len() == self.capacity {
            let old = self.recent.pop_front().expect("full window");
            self.sum -= old;
        }
        self.recent.push_back(squared_norm);
        self.sum += squared_norm;
        self.pushes += 1;
        // Resum periodically so cancellation errors do not accumulate.
        if self.pushes.is_multiple_of(self.capacity) {
            self.sum = self.recent.iter().sum();
        }
    }

    pub fn is_full(&self) -> bool {
        self.recent.len() == self.capacity
    }

    pub fn value(&self) -> f64 {
        self.sum.max(0.0).sqrt()
    }
}

/// Squared norm of the most recent update of every scenario. Guards the
/// sliding window against stopping while a scenario that was not drawn
/// recently still moves.
#[derive(Debug, Clone)]
pub struct LatestUpdates {
    latest: Vec<Option<f64>>,
    seen: usize,
    sum: f64,
    pushes: usize,
}

impl LatestUpdates {
    pub fn new(scenarios: usize) -> Self {
        Self { latest: vec![None; scenarios], seen: 0, sum: 0.0, pushes: 0 }
    }

    pub fn push(&mut self, s: usize, squared_norm: f64) {
        match self.latest[s].replace(squared_norm) {
            Some(old) => self.sum -= old,
            None => self.seen += 1,
        }
        self.sum += squared_norm;
        self.pushes += 1;
        if self.pushes.is_multiple_of(self.latest.len()) {
            self.sum = self.latest.iter().flatten().sum();
        }
    }

    /// Every scenario has been updated at least once.
    pub fn complete(&self) -> bool {
        self.seen == self.latest.len()
    }

    pub fn value(&self) -> f64 {
        self.sum.max(0.0).sqrt()
    }
}

/// Stopping tests and metric emission shared by all methods.
#[derive(Debug)]
pub(crate) struct Monitor<'a> {
    problem: &'a StochasticProblem,
    stopping: &'a StoppingCriteria,
    reference: Option<f64>,
    pub rows: Vec<MetricsRow>,
}

impl<'a> Monitor<'a> {
    pub fn new(problem: &'a StochasticProblem, stopping: &'a StoppingCriteria, reference: Option<f64>) -> Self {
        Self { problem, stopping, reference, rows: Vec::new() }
    }

    pub fn emit(
        &mut self,
        time: f64,
        iteration: u64,
        n_subproblems: u64,
        steplength: f64,
        x: &IterateMatrix,
        y: &IterateMatrix,
    ) -> Result<(), SolveError> {
        let (subopt_rel, feas) = metrics(self.problem, x, y, self.reference)?;
        let wall_time_s = self.rows.last().map_or(time, |r| r.wall_time_s.max(time));
        self.rows.push(MetricsRow {
            wall_time_s,
            iteration,
            n_subproblems,
            steplength,
            subopt_rel,
            feas_err: Some(feas),
        });
        Ok(())
    }

    pub fn last_emitted(&self) -> Option<u64> {
        self.rows.last().map(|r| r.n_subproblems)
    }

    pub fn limit(&self, time: f64, n_subproblems: u64) -> Option<Termination> {
        if n_subproblems >= self.stopping.max_subproblems {
            Some(Termination::MaxSubproblems)
        } else if time >= self.stopping.max_time {
            Some(Termination::MaxTime)
        } else {
            None
        }
    }

    pub fn residual_met(&self, step: f64, z_norm: f64) -> bool {
        self.stopping.residual_met(step, z_norm)
    }
}
