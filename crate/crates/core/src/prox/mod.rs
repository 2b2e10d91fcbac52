//! Proximal oracle for convex quadratic scenario costs.
//!
//! [`prox`] returns `argmin_y f(y) + (1/2μ)‖y − v‖²` where
//! `f = ½yᵀQy + cᵀy` restricted to linear equalities, inequalities and
//! bounds. The proximal term makes the problem strongly convex, so the
//! minimizer is unique.
//!
//! Residuals reported in [`ProxResult`] are scaled: the primal residual is
//! the largest constraint violation divided by `1 + ‖Ay‖∞`, the dual
//! residual the stationarity error divided by `1 + max(‖Py‖∞, ‖q‖∞, ‖Aᵀλ‖∞)`.

mod active_set;
mod admm;
mod problem;

use serde::{Deserialize, Serialize};

pub use admm::ProxWorkspace;
pub use problem::{QpBuilder, QpScenarioProblem};

use problem::{RowKind, StackedConstraints};

use crate::error::SolveError;

/// Default subproblem tolerance on the scaled KKT residuals.
pub const DEFAULT_PROX_TOL: f64 = 1e-10;
/// Default cap on inner iterations.
pub const DEFAULT_PROX_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial constraint penalty.
    pub rho: f64,
    /// Primal regularization of the linear system.
    pub sigma: f64,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub check_every: usize,
    pub polish_every: usize,
    /// Attempt the exact finisher as soon as both residuals fall below this.
    pub polish_threshold: f64,
    pub max_active_set_rounds: usize,
    pub adapt_rho_every: usize,
    /// Infeasibility is declared when the scaled primal residual stays above
    /// `stall_level` without improving for `stall_iterations` iterations.
    pub stall_level: f64,
    pub stall_iterations: usize,
}

impl Default for ProxSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_PROX_TOL,
            max_iter: DEFAULT_PROX_MAX_ITER,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 10,
            polish_every: 50,
            polish_threshold: 1e-6,
            max_active_set_rounds: 30,
            adapt_rho_every: 100,
            stall_level: 1e-6,
            stall_iterations: 1000,
        }
    }
}

impl ProxSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::Config(format!("prox tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 || self.check_every == 0 || self.polish_every == 0 {
            return Err(SolveError::Config("prox iteration counts must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) || !(self.rho > 0.0) || !(self.sigma > 0.0) {
            return Err(SolveError::Config("prox penalty parameters out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxStatus {
    Solved,
    MaxIterations,
    Infeasible,
}

/// Lagrange multipliers of the three constraint groups. Inequality
/// multipliers are nonnegative; a bound multiplier is positive when the
/// upper bound binds and negative when the lower bound binds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers {
    pub equality: Vec<f64>,
    pub inequality: Vec<f64>,
    pub bound: Vec<f64>,
}

impl Multipliers {
    fn from_stacked(st: &StackedConstraints, y: &[f64]) -> Self {
        let n = st.a.ncols();
        let mut out = Self::default();
        out.bound = vec![0.0; n];
        for (i, kind) in st.kinds.iter().enumerate() {
            match *kind {
                RowKind::Equality(_) => out.equality.push(y[i]),
                RowKind::Inequality(_) => out.inequality.push(y[i]),
                RowKind::Bound(j) => out.bound[j] = y[i],
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxResult {
    /// The minimizer.
    pub y: Vec<f64>,
    pub multipliers: Multipliers,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub inner_iterations: usize,
    pub status: ProxStatus,
    /// Whether the point came out of the exact active-set finisher.
    pub polished: bool,
}

/// Residual level up to which an iterate that hit the iteration cap is
/// still accepted by the outer algorithms (with a warning).
pub const ACCEPT_UNCONVERGED: f64 = 1e-6;

impl ProxResult {
    pub fn is_solved(&self) -> bool {
        self.status == ProxStatus::Solved
    }

    /// The minimizer, or the error the outer algorithms abort with.
    pub fn into_minimizer(self, scenario: usize) -> Result<Vec<f64>, SolveError> {
        match self.status {
            ProxStatus::Solved => Ok(self.y),
            ProxStatus::Infeasible => Err(SolveError::Infeasible { scenario }),
            ProxStatus::MaxIterations => {
                let worst = self.primal_residual.max(self.dual_residual);
                if worst <= ACCEPT_UNCONVERGED {
                    log::warn!("scenario {scenario}: prox stopped at the iteration cap with residual {worst:e}");
                    Ok(self.y)
                } else {
                    Err(SolveError::Prox {
                        scenario,
                        reason: format!("no convergence after {} iterations (residual {worst:e})", self.inner_iterations),
                    })
                }
            }
        }
    }
}

/// One proximal evaluation with a fresh workspace.
pub fn prox(problem: &QpScenarioProblem, v: &[f64], mu: f64, settings: &ProxSettings) -> ProxResult {
    ProxWorkspace::new().solve(problem, v, mu, settings)
}

/// Elementwise [`prox`], preserving order. Infeasible elements abort the
/// batch with their index.
pub fn prox_batch(
    problems: &[QpScenarioProblem],
    points: &[Vec<f64>],
    mu: f64,
    settings: &ProxSettings,
) -> Result<Vec<ProxResult>, SolveError> {
    if problems.len() != points.len() {
        return Err(SolveError::Config(format!(
            "{} problems but {} points in prox batch",
            problems.len(),
            points.len()
        )));
    }
    problems
        .iter()
        .zip(points)
        .enumerate()
        .map(|(s, (problem, v))| {
            let result = prox(problem, v, mu, settings);
            match result.status {
                ProxStatus::Infeasible => Err(SolveError::Infeasible { scenario: s }),
                _ => Ok(result),
            }
        })
        .collect()
}
