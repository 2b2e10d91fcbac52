use crate::error::{SolveError, StructureError};
use crate::iterate::IterateMatrix;
use crate::prox::QpScenarioProblem;
use crate::tree::ScenarioTree;

/// A multistage problem: the scenario tree plus one convex QP per scenario.
#[derive(Debug, Clone)]
pub struct StochasticProblem {
    tree: ScenarioTree,
    scenarios: Vec<QpScenarioProblem>,
}

impl StochasticProblem {
    pub fn new(tree: ScenarioTree, scenarios: Vec<QpScenarioProblem>) -> Result<Self, SolveError> {
        if scenarios.len() != tree.num_scenarios() {
            return Err(StructureError::DimensionMismatch {
                expected: (tree.num_scenarios(), tree.dim()),
                found: (scenarios.len(), tree.dim()),
            }
            .into());
        }
        if let Some((s, p)) = scenarios.iter().enumerate().find(|(_, p)| p.dim() != tree.dim()) {
            return Err(StructureError::RaggedRows { row: s, expected: tree.dim(), found: p.dim() }.into());
        }
        Ok(Self { tree, scenarios })
    }

    pub fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    pub fn scenarios(&self) -> &[QpScenarioProblem] {
        &self.scenarios
    }

    pub fn scenario(&self, s: usize) -> &QpScenarioProblem {
        &self.scenarios[s]
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn dim(&self) -> usize {
        self.tree.dim()
    }

    pub fn zeros(&self) -> IterateMatrix {
        IterateMatrix::zeros(self.num_scenarios(), self.dim())
    }

    /// Expected cost `Σ_s p_s f̃^s(x^s)` of the smooth part only; constraints
    /// are not checked.
    pub fn expected_cost(&self, x: &IterateMatrix) -> Result<f64, StructureError> {
        self.tree.check_iterate(x)?;
        Ok(self
            .scenarios
            .iter()
            .enumerate()
            .map(|(s, p)| self.tree.probability(s) * p.objective(x.row(s)))
            .sum())
    }

    /// Largest constraint violation over all scenario rows.
    pub fn max_violation(&self, x: &IterateMatrix) -> Result<f64, StructureError> {
        self.tree.check_iterate(x)?;
        Ok(self.scenarios.iter().enumerate().map(|(s, p)| p.constraint_violation(x.row(s))).fold(0.0, f64::max))
    }
}
