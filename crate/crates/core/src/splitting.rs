//! Operator-level view of the hedging methods.
//!
//! With `A = ∂f` (the scenario costs) and `B` the normal cone of the
//! non-anticipativity subspace, both taken in the probability-weighted
//! geometry, the reflected resolvents are
//!
//! * `O_B(z) = 2x − z` with `x` the bundle-averaged projection of `z`,
//! * `O_A(z) = 2y − z` with `y^s = prox_{μ f^s}(z^s)`.
//!
//! Progressive Hedging is Douglas–Rachford on `z = x + μw`; the randomized
//! and asynchronous variants are its coordinate and delayed-coordinate
//! forms. The functions here are written literally from those formulas and
//! serve as an independent path against which the algorithms are checked.

use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::prox::{ProxSettings, ProxWorkspace};
use crate::tree::ScenarioTree;

#[derive(Debug, Clone, PartialEq)]
pub struct SplittingState {
    pub z: IterateMatrix,
    pub mu: f64,
}

impl SplittingState {
    pub fn new(z: IterateMatrix, mu: f64) -> Result<Self, SolveError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SolveError::Config(format!("mu must be positive, got {mu}")));
        }
        if !z.is_finite() {
            return Err(SolveError::Config("splitting state must be finite".into()));
        }
        Ok(Self { z, mu })
    }
}

/// `(x, 2x − z)` with `x` the non-anticipative projection of `z`.
pub fn reflected_resolvent_b(
    z: &IterateMatrix,
    tree: &ScenarioTree,
) -> Result<(IterateMatrix, IterateMatrix), SolveError> {
    let x = tree.project_nonanticipative(z)?;
    let reflected = reflect(&x, z);
    Ok((x, reflected))
}

/// `(y, 2y − z)` with `y^s = prox_{μ f^s}(z^s)`.
pub fn reflected_resolvent_a(
    z: &IterateMatrix,
    problem: &StochasticProblem,
    mu: f64,
    settings: &ProxSettings,
    workspaces: &mut [ProxWorkspace],
) -> Result<(IterateMatrix, IterateMatrix), SolveError> {
    problem.tree().check_iterate(z)?;
    check_workspaces(problem, workspaces)?;
    let mut y = problem.zeros();
    for (s, ws) in workspaces.iter_mut().enumerate() {
        let row = ws.solve(problem.scenario(s), z.row(s), mu, settings).into_minimizer(s)?;
        y.set_row(s, &row);
    }
    let reflected = reflect(&y, z);
    Ok((y, reflected))
}

/// `½ O_A(O_B(z)) + ½ z`.
pub fn dr_step(
    state: &SplittingState,
    problem: &StochasticProblem,
    settings: &ProxSettings,
    workspaces: &mut [ProxWorkspace],
) -> Result<SplittingState, SolveError> {
    let (_, rb) = reflected_resolvent_b(&state.z, problem.tree())?;
    let (_, ra) = reflected_resolvent_a(&rb, problem, state.mu, settings, workspaces)?;
    let z = IterateMatrix::from_vec(
        ra.rows(),
        ra.cols(),
        ra.as_slice().iter().zip(state.z.as_slice()).map(|(a, z)| 0.5 * a + 0.5 * z).collect(),
    )?;
    Ok(SplittingState { z, mu: state.mu })
}

/// Row `s` of [`dr_step`] written into `z`; other rows are untouched and no
/// other scenario's prox is evaluated.
pub fn rdr_step(
    state: &SplittingState,
    problem: &StochasticProblem,
    s: usize,
    settings: &ProxSettings,
    workspace: &mut ProxWorkspace,
) -> Result<SplittingState, SolveError> {
    let (_, target) = scenario_operator(&state.z, problem, s, state.mu, settings, workspace)?;
    let mut z = state.z.clone();
    for (zj, tj) in z.row_mut(s).iter_mut().zip(&target) {
        *zj = 0.5 * tj + 0.5 * *zj;
    }
    Ok(SplittingState { z, mu: state.mu })
}

/// Delayed coordinate step: row `s` of the current `z` moves by
/// `−(η / (S q_s)) (ẑ^s − [O_A(O_B(ẑ))]^s)` where `ẑ = stale_z`.
#[allow(clippy::too_many_arguments)]
pub fn arock_step(
    state: &SplittingState,
    stale_z: &IterateMatrix,
    s: usize,
    eta: f64,
    q_s: f64,
    problem: &StochasticProblem,
    settings: &ProxSettings,
    workspace: &mut ProxWorkspace,
) -> Result<SplittingState, SolveError> {
    if !(eta > 0.0) || !(q_s > 0.0) {
        return Err(SolveError::Config(format!("stepsize {eta} and probability {q_s} must be positive")));
    }
    problem.tree().check_iterate(&state.z)?;
    let (_, target) = scenario_operator(stale_z, problem, s, state.mu, settings, workspace)?;
    let scale = eta / (problem.num_scenarios() as f64 * q_s);
    let mut z = state.z.clone();
    for ((zj, sj), tj) in z.row_mut(s).iter_mut().zip(stale_z.row(s)).zip(&target) {
        *zj -= scale * (sj - tj);
    }
    Ok(SplittingState { z, mu: state.mu })
}

/// `(x^s, [O_A(O_B(z))]^s)` using only scenario `s`'s bundles and prox.
fn scenario_operator(
    z: &IterateMatrix,
    problem: &StochasticProblem,
    s: usize,
    mu: f64,
    settings: &ProxSettings,
    workspace: &mut ProxWorkspace,
) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
    let tree = problem.tree();
    let x = tree.project_scenario(z, s)?;
    let rb: Vec<f64> = x.iter().zip(z.row(s)).map(|(x, z)| 2.0 * x - z).collect();
    let y = workspace.solve(problem.scenario(s), &rb, mu, settings).into_minimizer(s)?;
    let ra = y.iter().zip(&rb).map(|(y, r)| 2.0 * y - r).collect();
    Ok((x, ra))
}

fn reflect(point: &IterateMatrix, z: &IterateMatrix) -> IterateMatrix {
    let data = point.as_slice().iter().zip(z.as_slice()).map(|(p, z)| 2.0 * p - z).collect();
    IterateMatrix::from_vec(z.rows(), z.cols(), data).expect("same shape")
}

fn check_workspaces(problem: &StochasticProblem, workspaces: &[ProxWorkspace]) -> Result<(), SolveError> {
    if workspaces.len() != problem.num_scenarios() {
        return Err(SolveError::Config(format!(
            "{} prox workspaces for {} scenarios",
            workspaces.len(),
            problem.num_scenarios()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::prox::QpScenarioProblem;
    use crate::tree::StageLayout;

    fn two_scenario_tree() -> ScenarioTree {
        ScenarioTree::new(StageLayout::new(vec![1]).unwrap(), vec![0.25, 0.75], vec![vec![vec![0, 1]]]).unwrap()
    }

    fn zero_costs(tree: ScenarioTree) -> StochasticProblem {
        let n = tree.dim();
        let scenarios = (0..tree.num_scenarios()).map(|_| QpScenarioProblem::builder(n).build().unwrap()).collect();
        StochasticProblem::new(tree, scenarios).unwrap()
    }

    #[test]
    fn reflection_through_subspace() {
        let tree = two_scenario_tree();
        let z = IterateMatrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let (x, r) = reflected_resolvent_b(&z, &tree).unwrap();
        assert_eq!(x.to_rows(), vec![vec![2.5], vec![2.5]]);
        assert_eq!(r.to_rows(), vec![vec![4.0], vec![2.0]]);

        let inside = IterateMatrix::from_rows(&[vec![1.5], vec![1.5]]).unwrap();
        assert_eq!(reflected_resolvent_b(&inside, &tree).unwrap().1, inside);
        // P-orthogonal complement: 0.25·a + 0.75·b = 0
        let perp = IterateMatrix::from_rows(&[vec![3.0], vec![-1.0]]).unwrap();
        assert_eq!(reflected_resolvent_b(&perp, &tree).unwrap().1, perp.scale(-1.0));
    }

    #[test]
    fn reflection_through_costs() {
        let problem = zero_costs(two_scenario_tree());
        let z = IterateMatrix::from_rows(&[vec![1.0], vec![-3.0]]).unwrap();
        let mut ws = ProxWorkspace::batch(2);
        let (y, r) = reflected_resolvent_a(&z, &problem, 1.0, &ProxSettings::default(), &mut ws).unwrap();
        assert_eq!(y, z);
        assert_eq!(r, z);

        let tree = two_scenario_tree();
        let half = (0..2)
            .map(|_| QpScenarioProblem::builder(1).quadratic(DMatrix::identity(1, 1)).build().unwrap())
            .collect();
        let problem = StochasticProblem::new(tree, half).unwrap();
        let (y, r) = reflected_resolvent_a(&z, &problem, 1.0, &ProxSettings::default(), &mut ws).unwrap();
        assert_eq!(y, z.scale(0.5));
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn zero_costs_keep_subspace_points_fixed() {
        let problem = zero_costs(two_scenario_tree());
        let z = IterateMatrix::from_rows(&[vec![0.7], vec![0.7]]).unwrap();
        let state = SplittingState::new(z.clone(), 1.0).unwrap();
        let next = dr_step(&state, &problem, &ProxSettings::default(), &mut ProxWorkspace::batch(2)).unwrap();
        assert_eq!(next.z, z);
    }

    #[test]
    fn arock_zero_innovation_and_validation() {
        let problem = zero_costs(two_scenario_tree());
        let z = IterateMatrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
        let state = SplittingState::new(z.clone(), 1.0).unwrap();
        let mut ws = ProxWorkspace::new();
        let settings = ProxSettings::default();
        let next = arock_step(&state, &z, 1, 0.3, 0.5, &problem, &settings, &mut ws).unwrap();
        assert_eq!(next.z, z);
        assert!(arock_step(&state, &z, 1, 0.0, 0.5, &problem, &settings, &mut ws).is_err());
        assert!(SplittingState::new(z, 0.0).is_err());
    }
}
