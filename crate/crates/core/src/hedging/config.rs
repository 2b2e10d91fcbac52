use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::prox::ProxSettings;
use crate::rng;
use crate::runtime::SimSchedule;
use crate::tree::{ScenarioTree, PROBABILITY_SUM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Progressive Hedging: every scenario each iteration.
    Ph,
    /// Randomized PH: one sampled scenario per iteration.
    Rph,
    /// Synchronous parallel RPH: a batch of sampled scenarios per round.
    #[serde(rename = "par")]
    Parallel,
    /// Asynchronous RPH.
    Async,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ph, Algorithm::Rph, Algorithm::Parallel, Algorithm::Async];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ph => "ph",
            Self::Rph => "rph",
            Self::Parallel => "par",
            Self::Async => "async",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// How the randomized methods pick scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Uniform,
    /// `q = p`.
    Proportional,
    Explicit(Vec<f64>),
}

impl Sampling {
    pub fn resolve(&self, tree: &ScenarioTree) -> Result<SamplingLaw, SolveError> {
        let n = tree.num_scenarios();
        match self {
            Self::Uniform => SamplingLaw::new(vec![1.0 / n as f64; n]),
            Self::Proportional => SamplingLaw::new(tree.probabilities().to_vec()),
            Self::Explicit(q) => {
                if q.len() != n {
                    return Err(SolveError::Config(format!("sampling law has {} entries for {n} scenarios", q.len())));
                }
                SamplingLaw::new(q.clone())
            }
        }
    }
}

/// A validated scenario distribution with its inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingLaw {
    q: Vec<f64>,
    cum: Vec<f64>,
}

impl SamplingLaw {
    pub fn new(q: Vec<f64>) -> Result<Self, SolveError> {
        if q.is_empty() {
            return Err(SolveError::Config("empty sampling law".into()));
        }
        if let Some(s) = q.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SolveError::Config(format!("sampling probability q[{s}] = {} must be positive", q[s])));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(SolveError::Config(format!("sampling probabilities sum to {total}, not 1")));
        }
        let cum = rng::cumulative(&q);
        Ok(Self { q, cum })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_min(&self) -> f64 {
        self.q.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng::draw_index(&self.cum, rng)
    }
}

/// Stepsize of the asynchronous method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaRule {
    Unit,
    Fixed(f64),
    /// `c S q_min / (2τ√q_min + 1)` for delays bounded by `τ`, `0 < c < 1`.
    Theorem3 { c: f64, tau: u64 },
    /// `η = S q_s / 2` for the updated scenario, which turns the delay-free
    /// asynchronous update into the randomized one.
    ScenarioMatched,
}

impl EtaRule {
    pub fn validate(&self) -> Result<(), SolveError> {
        match *self {
            Self::Fixed(v) if !(v > 0.0 && v.is_finite()) => {
                Err(SolveError::Config(format!("fixed stepsize must be positive, got {v}")))
            }
            Self::Theorem3 { c, .. } if !(c > 0.0 && c < 1.0) => {
                Err(SolveError::Config(format!("stepsize constant c must lie in (0, 1), got {c}")))
            }
            _ => Ok(()),
        }
    }

    /// Stepsize for an update of scenario `s`.
    pub fn eta(&self, law: &SamplingLaw, s: usize) -> f64 {
        let num_scenarios = law.q().len();
        match *self {
            Self::Unit => 1.0,
            Self::Fixed(v) => v,
            Self::Theorem3 { c, tau } => theorem3_stepsize(c, num_scenarios, law.q_min(), tau),
            Self::ScenarioMatched => num_scenarios as f64 * law.q()[s] / 2.0,
        }
    }
}

impl fmt::Display for EtaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unit => f.write_str("unit"),
            Self::Fixed(v) => write!(f, "fixed:{v}"),
            Self::Theorem3 { c, tau } => write!(f, "theorem3:{c},{tau}"),
            Self::ScenarioMatched => f.write_str("matched"),
        }
    }
}

impl FromStr for EtaRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rule = match s {
            "unit" => Self::Unit,
            "matched" => Self::ScenarioMatched,
            _ => {
                if let Some(v) = s.strip_prefix("fixed:") {
                    Self::Fixed(v.parse().map_err(|_| format!("bad fixed stepsize `{v}`"))?)
                } else if let Some(rest) = s.strip_prefix("theorem3:") {
                    let (c, tau) = rest.split_once(',').ok_or_else(|| format!("expected theorem3:<c>,<tau>, got `{s}`"))?;
                    Self::Theorem3 {
                        c: c.trim().parse().map_err(|_| format!("bad constant `{c}`"))?,
                        tau: tau.trim().parse().map_err(|_| format!("bad delay bound `{tau}`"))?,
                    }
                } else {
                    return Err(format!("unknown stepsize rule `{s}`"));
                }
            }
        };
        rule.validate().map_err(|e| e.to_string())?;
        Ok(rule)
    }
}

/// `c S q_min / (2τ√q_min + 1)`.
pub fn theorem3_stepsize(c: f64, num_scenarios: usize, q_min: f64, tau: u64) -> f64 {
    c * num_scenarios as f64 * q_min / (2.0 * tau as f64 * q_min.sqrt() + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingCriteria {
    /// Seconds (simulated seconds under a simulated schedule).
    pub max_time: f64,
    pub max_subproblems: u64,
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self { max_time: 3600.0, max_subproblems: 1_000_000, eps_abs: 1e-8, eps_rel: 1e-4 }
    }
}

impl StoppingCriteria {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.max_time > 0.0) {
            return Err(SolveError::Config(format!("max time must be positive, got {}", self.max_time)));
        }
        if self.max_subproblems == 0 {
            return Err(SolveError::Config("max subproblems must be positive".into()));
        }
        if !(self.eps_abs >= 0.0 && self.eps_rel >= 0.0) {
            return Err(SolveError::Config("residual tolerances must be nonnegative".into()));
        }
        if self.eps_abs == 0.0 && self.eps_rel == 0.0 {
            return Err(SolveError::Config("eps_abs and eps_rel cannot both be zero".into()));
        }
        Ok(())
    }

    /// `‖Δz‖ ≤ ε_abs + ε_rel ‖z‖`.
    pub fn residual_met(&self, step: f64, z_norm: f64) -> bool {
        step <= self.eps_abs + self.eps_rel * z_norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub mu: f64,
    pub sampling: Sampling,
    pub eta: EtaRule,
    /// Batch size of the parallel method, worker count of the asynchronous
    /// one, prox threads for PH in real time.
    pub workers: usize,
    pub seed: u64,
    pub stopping: StoppingCriteria,
    pub prox: ProxSettings,
    /// Number of most recent single-scenario updates whose norms make up the
    /// residual of the randomized methods; defaults to `S`.
    pub residual_window: Option<usize>,
    /// When set, time is simulated from this schedule instead of measured.
    pub schedule: Option<SimSchedule>,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            sampling: Sampling::Uniform,
            eta: EtaRule::Unit,
            workers: 1,
            seed: 0,
            stopping: StoppingCriteria::default(),
            prox: ProxSettings::default(),
            residual_window: None,
            schedule: None,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self, tree: &ScenarioTree) -> Result<(), SolveError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SolveError::Config(format!("mu must be positive, got {}", self.mu)));
        }
        if self.workers == 0 {
            return Err(SolveError::Config("at least one worker is required".into()));
        }
        if self.residual_window == Some(0) {
            return Err(SolveError::Config("residual window must be positive".into()));
        }
        self.eta.validate()?;
        self.stopping.validate()?;
        self.prox.validate()?;
        self.sampling.resolve(tree)?;
        if let Some(schedule) = &self.schedule {
            schedule.validate(tree.num_scenarios())?;
        }
        Ok(())
    }

    pub fn window(&self, num_scenarios: usize) -> usize {
        self.residual_window.unwrap_or(num_scenarios)
    }
}
