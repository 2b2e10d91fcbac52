//! Seeded random small instances for tests and benchmarks.
//!
//! Every generated scenario problem is feasible by construction: a point
//! `x0` inside the bounds is drawn first and the constraint right-hand sides
//! are chosen so that `x0` satisfies them.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::prox::QpScenarioProblem;
use crate::tree::{ScenarioTree, StageLayout};

/// Size limits of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_scenarios: usize,
    pub max_stages: usize,
    pub max_stage_dim: usize,
    pub max_dim: usize,
    pub max_inequalities: usize,
    pub max_equalities: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_scenarios: 8, max_stages: 3, max_stage_dim: 2, max_dim: 6, max_inequalities: 3, max_equalities: 1 }
    }
}

/// Random nested partitions over a shuffled scenario order with random
/// positive probabilities.
pub fn tree<R: Rng + ?Sized>(rng: &mut R, limits: &Limits) -> Result<ScenarioTree, SolveError> {
    let stages = rng.gen_range(1..=limits.max_stages.max(1));
    let mut dims = Vec::with_capacity(stages);
    let mut total = 0;
    for t in 0..stages {
        let room = limits.max_dim.saturating_sub(total).saturating_sub(stages - 1 - t).max(1);
        let d = rng.gen_range(1..=limits.max_stage_dim.max(1).min(room));
        dims.push(d);
        total += d;
    }
    let num_scenarios = if stages == 1 { 1 } else { rng.gen_range(1..=limits.max_scenarios.max(1)) };
    let mut order: Vec<usize> = (0..num_scenarios).collect();
    order.shuffle(rng);

    let mut partitions = vec![vec![order]];
    for _ in 1..stages {
        let parent = partitions.last().expect("nonempty");
        let mut next = Vec::new();
        for bundle in parent {
            let mut rest: &[usize] = bundle;
            while !rest.is_empty() {
                let take = rng.gen_range(1..=rest.len());
                next.push(rest[..take].to_vec());
                rest = &rest[take..];
            }
        }
        partitions.push(next);
    }
    let weights: Vec<f64> = (0..num_scenarios).map(|_| rng.gen_range(0.1..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let probabilities = weights.iter().map(|w| w / sum).collect();
    Ok(ScenarioTree::new(StageLayout::new(dims)?, probabilities, partitions)?)
}

/// Random convex QP in `n` variables that is feasible at a random point.
pub fn scenario<R: Rng + ?Sized>(rng: &mut R, n: usize, limits: &Limits) -> Result<QpScenarioProblem, SolveError> {
    let mut lower = vec![f64::NEG_INFINITY; n];
    let mut upper = vec![f64::INFINITY; n];
    for j in 0..n {
        if rng.gen_bool(0.6) {
            lower[j] = rng.gen_range(-2.0..-0.2);
        }
        if rng.gen_bool(0.6) {
            upper[j] = rng.gen_range(0.2..2.0);
        }
    }
    let x0: Vec<f64> = (0..n)
        .map(|j| {
            let lo = lower[j].max(-1.5);
            let hi = upper[j].min(1.5);
            rng.gen_range(lo..hi)
        })
        .collect();

    let q = if rng.gen_bool(0.3) {
        DMatrix::zeros(n, n)
    } else {
        let rank = rng.gen_range(1..=n);
        let l = DMatrix::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
        &l * l.transpose()
    };
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();

    let m_in = rng.gen_range(0..=limits.max_inequalities);
    let a_in = DMatrix::from_fn(m_in, n, |_, _| rng.gen_range(-1.0..1.0));
    let b_in: Vec<f64> = (0..m_in)
        .map(|i| (0..n).map(|j| a_in[(i, j)] * x0[j]).sum::<f64>() + rng.gen_range(0.0..0.5))
        .collect();
    let m_eq = if n > 1 { rng.gen_range(0..=limits.max_equalities.min(n - 1)) } else { 0 };
    let a_eq = DMatrix::from_fn(m_eq, n, |_, _| rng.gen_range(-1.0..1.0));
    let b_eq: Vec<f64> = (0..m_eq).map(|i| (0..n).map(|j| a_eq[(i, j)] * x0[j]).sum()).collect();

    QpScenarioProblem::builder(n)
        .quadratic(q)
        .linear(c)
        .inequalities(a_in, b_in)
        .equalities(a_eq, b_eq)
        .lower_bounds(lower)
        .upper_bounds(upper)
        .build()
        .map_err(|e| SolveError::Config(e.to_string()))
}

/// Random tree with one random scenario problem per scenario.
pub fn problem<R: Rng + ?Sized>(rng: &mut R, limits: &Limits) -> Result<StochasticProblem, SolveError> {
    let tree = tree(rng, limits)?;
    let n = tree.dim();
    let scenarios = (0..tree.num_scenarios()).map(|_| scenario(rng, n, limits)).collect::<Result<Vec<_>, _>>()?;
    StochasticProblem::new(tree, scenarios)
}

/// Matrix with entries uniform in `[-scale, scale]`.
pub fn iterate<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> IterateMatrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
    IterateMatrix::from_vec(rows, cols, data).expect("matching length")
}
