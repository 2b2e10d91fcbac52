//! Hydro-thermal scheduling instances.
//!
//! `B` dams over `T` stages. At stage `t` the decision is
//! `(q_t, y_t, e_t)`: water stored per dam, water turbined per dam, and
//! electricity bought. Cost `Σ_t c_{H,t}·y_t + c_E e_t` (plus an optional
//! `λ‖x‖²`), subject to
//!
//! * `q_1 = W_1 − y_1`,
//! * `q_t = q_{t−1} − y_t + ξ_t` for `t ≥ 2`, where `ξ_t` is the inflow that
//!   arrived between stages `t − 1` and `t` (dry or wet),
//! * `Σ_b y_t^b + e_t ≥ D`,
//! * `q_t ≤ W`,
//! * all variables nonnegative.
//!
//! The inflow used at stage `t` is revealed after stage `t − 1`, so
//! scenarios sharing a stage-`t` bundle share every constraint up to `t`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::problem::StochasticProblem;
use crate::prox::QpScenarioProblem;
use crate::tree::{binary_branch, ScenarioTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroParams {
    pub dams: usize,
    pub stages: usize,
    /// Turbining cost per dam and stage, stage-major (`c_h[t * B + b]`).
    pub c_h: Vec<f64>,
    pub c_e: f64,
    /// Demand at every stage.
    pub demand: f64,
    pub w_cap: Vec<f64>,
    pub w_init: Vec<f64>,
    pub r_dry: Vec<f64>,
    pub r_wet: Vec<f64>,
    pub p_dry: f64,
    /// Weight of the optional `λ‖x‖²` term.
    #[serde(default)]
    pub lambda: f64,
}

/// Seeded generator for [`HydroParams`]: every coefficient is drawn
/// uniformly from its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydroSpec {
    pub dams: usize,
    pub stages: usize,
    pub seed: u64,
    pub p_dry: f64,
    pub lambda: f64,
    pub c_h: (f64, f64),
    pub c_e: f64,
    /// Demand per dam; the stage demand is this times `B`.
    pub demand_per_dam: f64,
    pub w_cap: (f64, f64),
    /// Initial water as a fraction of capacity.
    pub w_init_fraction: f64,
    pub r_dry: (f64, f64),
    pub r_wet: (f64, f64),
}

impl Default for HydroSpec {
    fn default() -> Self {
        Self {
            dams: 2,
            stages: 3,
            seed: 0,
            p_dry: 0.6,
            lambda: 0.0,
            c_h: (0.5, 1.5),
            c_e: 4.0,
            demand_per_dam: 3.0,
            w_cap: (6.0, 10.0),
            w_init_fraction: 0.5,
            r_dry: (0.5, 1.5),
            r_wet: (2.5, 4.5),
        }
    }
}

impl HydroSpec {
    pub fn new(dams: usize, stages: usize, seed: u64) -> Self {
        Self { dams, stages, seed, ..Self::default() }
    }

    pub fn generate(&self) -> Result<HydroParams, SolveError> {
        for (name, (lo, hi)) in [("c_h", self.c_h), ("w_cap", self.w_cap), ("r_dry", self.r_dry), ("r_wet", self.r_wet)] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(SolveError::Config(format!("range for {name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut draw = |(lo, hi): (f64, f64), count: usize| -> Vec<f64> {
            (0..count).map(|_| if hi > lo { rng.gen_range(lo..hi) } else { lo }).collect()
        };
        let c_h = draw(self.c_h, self.dams * self.stages);
        let w_cap = draw(self.w_cap, self.dams);
        let r_dry = draw(self.r_dry, self.dams);
        let r_wet = draw(self.r_wet, self.dams);
        let w_init = w_cap.iter().map(|w| w * self.w_init_fraction).collect();
        let params = HydroParams {
            dams: self.dams,
            stages: self.stages,
            c_h,
            c_e: self.c_e,
            demand: self.demand_per_dam * self.dams as f64,
            w_cap,
            w_init,
            r_dry,
            r_wet,
            p_dry: self.p_dry,
            lambda: self.lambda,
        };
        params.validate()?;
        Ok(params)
    }
}

impl HydroParams {
    /// Per-stage decision size `2B + 1`.
    pub fn stage_dim(&self) -> usize {
        2 * self.dams + 1
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let b = self.dams;
        let bad = |msg: String| Err(SolveError::Config(msg));
        if b == 0 || self.stages == 0 {
            return bad("hydro instances need at least one dam and one stage".into());
        }
        if self.c_h.len() != b * self.stages {
            return bad(format!("c_h has {} entries, expected {}", self.c_h.len(), b * self.stages));
        }
        for (name, v) in [("w_cap", &self.w_cap), ("w_init", &self.w_init), ("r_dry", &self.r_dry), ("r_wet", &self.r_wet)] {
            if v.len() != b {
                return bad(format!("{name} has {} entries for {b} dams", v.len()));
            }
        }
        let all = self
            .c_h
            .iter()
            .chain(&self.w_cap)
            .chain(&self.w_init)
            .chain(&self.r_dry)
            .chain(&self.r_wet)
            .chain([&self.c_e, &self.demand, &self.lambda]);
        if all.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("hydro coefficients must be finite and nonnegative".into());
        }
        if !(self.p_dry > 0.0 && self.p_dry < 1.0) {
            return bad(format!("p_dry must lie in (0, 1), got {}", self.p_dry));
        }
        if let Some(i) = (0..b).find(|&i| self.w_init[i] > self.w_cap[i]) {
            return bad(format!("dam {i} starts above its capacity"));
        }
        Ok(())
    }

    /// Inflow vector of scenario `s` arriving at stage `t ≥ 1` (0-based).
    pub fn inflow(&self, s: usize, t: usize) -> &[f64] {
        assert!(t >= 1 && t < self.stages);
        if binary_branch(s, t - 1, self.stages) == 0 {
            &self.r_dry
        } else {
            &self.r_wet
        }
    }

    /// Index of `q_t^b`, `y_t^b` and `e_t` in a scenario row.
    pub fn q_index(&self, t: usize, b: usize) -> usize {
        t * self.stage_dim() + b
    }

    pub fn y_index(&self, t: usize, b: usize) -> usize {
        t * self.stage_dim() + self.dams + b
    }

    pub fn e_index(&self, t: usize) -> usize {
        t * self.stage_dim() + 2 * self.dams
    }

    pub fn build(&self) -> Result<StochasticProblem, SolveError> {
        self.validate()?;
        let (b, stages) = (self.dams, self.stages);
        let n = self.stage_dim() * stages;
        let tree = ScenarioTree::binary_with_branching(&vec![self.stage_dim(); stages], self.p_dry)?;

        let mut c = vec![0.0; n];
        for t in 0..stages {
            for d in 0..b {
                c[self.y_index(t, d)] = self.c_h[t * b + d];
            }
            c[self.e_index(t)] = self.c_e;
        }

        let mut a_in = DMatrix::zeros(stages + b * stages, n);
        let mut b_in = Vec::with_capacity(stages + b * stages);
        for t in 0..stages {
            for d in 0..b {
                a_in[(t, self.y_index(t, d))] = -1.0;
            }
            a_in[(t, self.e_index(t))] = -1.0;
            b_in.push(-self.demand);
        }
        for t in 0..stages {
            for d in 0..b {
                a_in[(stages + t * b + d, self.q_index(t, d))] = 1.0;
                b_in.push(self.w_cap[d]);
            }
        }

        let mut a_eq = DMatrix::zeros(b * stages, n);
        for t in 0..stages {
            for d in 0..b {
                let row = t * b + d;
                a_eq[(row, self.q_index(t, d))] = 1.0;
                a_eq[(row, self.y_index(t, d))] = 1.0;
                if t > 0 {
                    a_eq[(row, self.q_index(t - 1, d))] = -1.0;
                }
            }
        }

        let scenarios = (0..tree.num_scenarios())
            .map(|s| {
                let b_eq: Vec<f64> = (0..stages)
                    .flat_map(|t| (0..b).map(move |d| (t, d)))
                    .map(|(t, d)| if t == 0 { self.w_init[d] } else { self.inflow(s, t)[d] })
                    .collect();
                QpScenarioProblem::builder(n)
                    .quadratic(DMatrix::identity(n, n) * (2.0 * self.lambda))
                    .linear(c.clone())
                    .equalities(a_eq.clone(), b_eq)
                    .inequalities(a_in.clone(), b_in.clone())
                    .lower_bounds(vec![0.0; n])
                    .build()
                    .map_err(|e| SolveError::Config(format!("scenario {s}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        StochasticProblem::new(tree, scenarios)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_probabilities() {
        let params = HydroSpec::new(2, 4, 3).generate().unwrap();
        let problem = params.build().unwrap();
        assert_eq!(problem.num_scenarios(), 8);
        assert_eq!(problem.dim(), 5 * 4);
        let p = problem.scenario(0);
        assert_eq!(p.num_equalities(), 2 * 4);
        assert_eq!(p.num_inequalities(), 4 + 2 * 4);
        let total: f64 = problem.tree().probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((problem.tree().probability(0) - 0.6f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn single_stage_is_deterministic() {
        let problem = HydroSpec::new(3, 1, 0).generate().unwrap().build().unwrap();
        assert_eq!(problem.num_scenarios(), 1);
        assert_eq!(problem.tree().partition(0).len(), 1);
    }

    #[test]
    fn inflows_agree_within_bundles() {
        let params = HydroSpec::new(1, 4, 1).generate().unwrap();
        let tree = params.build().unwrap().tree().clone();
        for t in 1..4 {
            for bundle in tree.partition(t) {
                for &s in bundle {
                    for u in 1..=t {
                        assert_eq!(params.inflow(s, u), params.inflow(bundle[0], u));
                    }
                }
            }
        }
    }

    #[test]
    fn generator_is_seeded() {
        assert_eq!(HydroSpec::new(2, 3, 5).generate().unwrap(), HydroSpec::new(2, 3, 5).generate().unwrap());
        assert_ne!(HydroSpec::new(2, 3, 5).generate().unwrap(), HydroSpec::new(2, 3, 6).generate().unwrap());
    }

    #[test]
    fn invalid_parameters() {
        let mut params = HydroSpec::default().generate().unwrap();
        params.w_init[0] = params.w_cap[0] + 1.0;
        assert!(params.validate().is_err());
        let spec = HydroSpec { p_dry: 1.0, ..HydroSpec::default() };
        assert!(spec.generate().is_err());
    }
}
