//! `solution.json` and `manifest.json`.

use std::collections::BTreeMap;
use std::path::Path;

use rphedge::hedging::{Algorithm, AlgorithmConfig, RunRecord, Termination};
use rphedge::problem::StochasticProblem;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::reference::Reference;

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub algorithm: Algorithm,
    pub termination: Termination,
    pub objective: f64,
    /// Final non-anticipative iterate, one row per scenario.
    pub x: Vec<Vec<f64>>,
    pub iterations: u64,
    pub n_subproblems: u64,
    pub elapsed_seconds: f64,
    pub tau_obs: Option<u64>,
    /// Delay value to count.
    pub delay_histogram: Option<BTreeMap<u64, u64>>,
    pub reference: Option<f64>,
    pub subopt_rel: Option<f64>,
    pub feas_err: Option<f64>,
    /// `‖proj(x) − x‖_F`.
    pub nonanticipativity_gap: f64,
}

impl Solution {
    pub fn new(problem: &StochasticProblem, record: &RunRecord, reference: Option<f64>) -> Result<Self> {
        let last = record.final_row();
        let gap = problem.tree().nonanticipativity_gap(&record.x).map_err(|e| CliError::runtime(e.to_string()))?;
        Ok(Self {
            algorithm: record.algorithm,
            termination: record.termination.clone(),
            objective: record.objective,
            x: (0..record.x.rows()).map(|s| record.x.row(s).to_vec()).collect(),
            iterations: record.iterations,
            n_subproblems: record.n_subproblems,
            elapsed_seconds: record.elapsed_seconds,
            tau_obs: record.tau_obs(),
            delay_histogram: record.delays.as_ref().map(|d| d.histogram().clone()),
            reference,
            subopt_rel: last.and_then(|r| r.subopt_rel),
            feas_err: last.and_then(|r| r.feas_err),
            nonanticipativity_gap: gap,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemInfo {
    pub path: String,
    pub sha256: String,
    pub num_scenarios: usize,
    pub stage_dims: Vec<usize>,
}

/// Everything needed to rerun a solve.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub algorithm: Algorithm,
    pub config: AlgorithmConfig,
    /// Window actually used by the randomized residual.
    pub residual_window: usize,
    pub problem: ProblemInfo,
    pub reference: Reference,
    /// Schedule file, or `none` for measured time.
    pub sim_schedule: String,
}

/// Manifest entries that can change a trajectory. A path covers every key
/// below it.
pub const KNOBS: &[&str] = &[
    "algorithm",
    "config.mu",
    "config.sampling",
    "config.eta",
    "config.workers",
    "config.seed",
    "config.stopping.max_time",
    "config.stopping.max_subproblems",
    "config.stopping.eps_abs",
    "config.stopping.eps_rel",
    "config.prox.tol",
    "config.prox.max_iter",
    "config.prox.rho",
    "config.prox.sigma",
    "config.prox.alpha",
    "config.prox.check_every",
    "config.prox.polish_every",
    "config.prox.polish_threshold",
    "config.prox.max_active_set_rounds",
    "config.prox.adapt_rho_every",
    "config.prox.stall_level",
    "config.prox.stall_iterations",
    "config.residual_window",
    "config.schedule",
    "residual_window",
    "problem.sha256",
    "reference.value",
];

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    std::fs::write(path, text + "\n").map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}
