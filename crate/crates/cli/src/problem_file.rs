//! JSON problem files.
//!
//! A file either spells out the tree and every scenario QP, or names a
//! hydro instance through its generator (`hydro`) or its coefficients
//! (`hydro_params`). Matrices are lists of `[row, col, value]` triplets;
//! a `null` bound is infinite.

use std::collections::HashSet;
use std::path::Path;

use rphedge::hydro::{HydroParams, HydroSpec};
use rphedge::problem::StochasticProblem;
use rphedge::prox::QpScenarioProblem;
use rphedge::tree::{ScenarioTree, StageLayout};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::linalg::{dense, triplets};

pub const FORMAT_VERSION: u32 = 1;

pub type Triplet = (usize, usize, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<Vec<ScenarioSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro: Option<HydroSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hydro_params: Option<HydroParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub probabilities: Vec<f64>,
    /// Per stage, the bundles as lists of scenario indices.
    pub partitions: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub q: Vec<Triplet>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub a_eq: Vec<Triplet>,
    #[serde(default)]
    pub b_eq: Vec<f64>,
    #[serde(default)]
    pub a_in: Vec<Triplet>,
    #[serde(default)]
    pub b_in: Vec<f64>,
    #[serde(default)]
    pub lower: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub upper: Option<Vec<Option<f64>>>,
}

impl ProblemFile {
    pub fn hydro(spec: HydroSpec) -> Self {
        Self { version: FORMAT_VERSION, stage_dims: None, tree: None, scenarios: None, hydro: Some(spec), hydro_params: None }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| CliError::parse(format!("problem file: {e}")))?;
        if file.version != FORMAT_VERSION {
            return Err(CliError::parse(format!(
                "problem file version {} is not supported (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
    }

    /// Builds the in-memory model, checking every structural invariant.
    pub fn to_problem(&self) -> Result<StochasticProblem> {
        let explicit = self.stage_dims.is_some() || self.tree.is_some() || self.scenarios.is_some();
        let forms = [explicit, self.hydro.is_some(), self.hydro_params.is_some()];
        if forms.iter().filter(|&&f| f).count() != 1 {
            return Err(CliError::parse(
                "a problem file needs exactly one of: stage_dims/tree/scenarios, hydro, hydro_params",
            ));
        }
        if let Some(spec) = &self.hydro {
            return Ok(spec.generate()?.build()?);
        }
        if let Some(params) = &self.hydro_params {
            return Ok(params.build()?);
        }
        let missing = |what: &str| CliError::parse(format!("problem file: missing `{what}`"));
        let dims = self.stage_dims.clone().ok_or_else(|| missing("stage_dims"))?;
        let tree_spec = self.tree.as_ref().ok_or_else(|| missing("tree"))?;
        let specs = self.scenarios.as_ref().ok_or_else(|| missing("scenarios"))?;
        let layout = StageLayout::new(dims).map_err(|e| CliError::parse(e.to_string()))?;
        let tree = ScenarioTree::new(layout, tree_spec.probabilities.clone(), tree_spec.partitions.clone())
            .map_err(|e| CliError::parse(e.to_string()))?;
        let n = tree.dim();
        let scenarios = specs
            .iter()
            .enumerate()
            .map(|(s, spec)| spec.build(n).map_err(|e| CliError::parse(format!("scenario {s}: {}", e.message))))
            .collect::<Result<Vec<_>>>()?;
        Ok(StochasticProblem::new(tree, scenarios)?)
    }

    /// Explicit form of an in-memory model.
    pub fn from_problem(problem: &StochasticProblem) -> Self {
        let tree = problem.tree();
        Self {
            version: FORMAT_VERSION,
            stage_dims: Some(tree.layout().stage_dims().to_vec()),
            tree: Some(TreeSpec {
                probabilities: tree.probabilities().to_vec(),
                partitions: (0..tree.num_stages()).map(|t| tree.partition(t).to_vec()).collect(),
            }),
            scenarios: Some(problem.scenarios().iter().map(ScenarioSpec::from_qp).collect()),
            hydro: None,
            hydro_params: None,
        }
    }
}

impl ScenarioSpec {
    fn build(&self, n: usize) -> Result<QpScenarioProblem> {
        if self.c.len() != n {
            return Err(CliError::parse(format!("c has {} entries, expected {n}", self.c.len())));
        }
        let bounds = |given: &Option<Vec<Option<f64>>>, infinite: f64, name: &str| -> Result<Vec<f64>> {
            match given {
                None => Ok(vec![infinite; n]),
                Some(v) if v.len() != n => Err(CliError::parse(format!("{name} has {} entries, expected {n}", v.len()))),
                Some(v) => Ok(v.iter().map(|b| b.unwrap_or(infinite)).collect()),
            }
        };
        let lower = bounds(&self.lower, f64::NEG_INFINITY, "lower")?;
        let upper = bounds(&self.upper, f64::INFINITY, "upper")?;
        QpScenarioProblem::builder(n)
            .quadratic(dense(&self.q, n, n, "q")?)
            .linear(self.c.clone())
            .equalities(dense(&self.a_eq, self.b_eq.len(), n, "a_eq")?, self.b_eq.clone())
            .inequalities(dense(&self.a_in, self.b_in.len(), n, "a_in")?, self.b_in.clone())
            .lower_bounds(lower)
            .upper_bounds(upper)
            .build()
            .map_err(|e| CliError::parse(e.to_string()))
    }

    fn from_qp(qp: &QpScenarioProblem) -> Self {
        let finite = |v: &[f64]| -> Option<Vec<Option<f64>>> {
            if v.iter().all(|b| b.is_infinite()) {
                None
            } else {
                Some(v.iter().map(|&b| b.is_finite().then_some(b)).collect())
            }
        };
        Self {
            q: triplets(qp.quadratic()),
            c: qp.linear().as_slice().to_vec(),
            a_eq: triplets(qp.a_eq()),
            b_eq: qp.b_eq().as_slice().to_vec(),
            a_in: triplets(qp.a_in()),
            b_in: qp.b_in().as_slice().to_vec(),
            lower: finite(qp.lower()),
            upper: finite(qp.upper()),
        }
    }
}

/// Rejects repeated `(row, col)` pairs.
pub(crate) fn check_unique(entries: &[Triplet], name: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for &(r, c, _) in entries {
        if !seen.insert((r, c)) {
            return Err(CliError::parse(format!("{name}: entry ({r}, {c}) given twice")));
        }
    }
    Ok(())
}
