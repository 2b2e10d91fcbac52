//! Deterministic equivalent over node variables.
//!
//! Each bundle of each stage (a node of the tree) gets one variable block;
//! scenario `s` reads the blocks of the nodes on its path, so every expanded
//! solution is non-anticipative by construction. Scenario constraints are
//! mapped onto node variables and exact duplicates (shared by scenarios of a
//! common node) are kept once. The resulting QP is solved by a proximal
//! point loop on top of the scenario prox oracle, which also handles the
//! purely linear case.

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::SolveError;
use crate::iterate::IterateMatrix;
use crate::problem::StochasticProblem;
use crate::prox::{ProxSettings, ProxWorkspace, QpScenarioProblem};

/// Optimal non-anticipative solution and its expected cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensiveSolution {
    pub x: IterateMatrix,
    pub f_star: f64,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct ExtensiveSettings {
    /// Inner prox tolerance.
    pub tol: f64,
    /// Stop once a proximal step moves less than this, relative to the
    /// iterate size.
    pub step_tol: f64,
    pub max_outer: usize,
    pub mu_start: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
}

impl Default for ExtensiveSettings {
    fn default() -> Self {
        Self { tol: 1e-10, step_tol: 1e-8, max_outer: 500, mu_start: 1.0, mu_growth: 10.0, mu_max: 1e4 }
    }
}

/// Column map from scenario coordinates to node variables.
struct NodeMap {
    /// `columns[s][j]`: node-variable index of coordinate `j` of scenario `s`.
    columns: Vec<Vec<usize>>,
    num_vars: usize,
}

impl NodeMap {
    fn new(problem: &StochasticProblem) -> Self {
        let tree = problem.tree();
        let layout = tree.layout();
        let mut columns = vec![vec![0; tree.dim()]; tree.num_scenarios()];
        let mut next = 0;
        for t in 0..tree.num_stages() {
            let range = layout.stage_range(t);
            for bundle in tree.partition(t) {
                for (k, j) in range.clone().enumerate() {
                    for &s in bundle {
                        columns[s][j] = next + k;
                    }
                }
                next += range.len();
            }
        }
        Self { columns, num_vars: next }
    }
}

/// Builds the node-variable QP.
pub fn node_problem(problem: &StochasticProblem) -> Result<(QpScenarioProblem, Vec<Vec<usize>>), SolveError> {
    let map = NodeMap::new(problem);
    let tree = problem.tree();
    let nv = map.num_vars;
    let mut q = DMatrix::zeros(nv, nv);
    let mut c = vec![0.0; nv];
    let mut lower = vec![f64::NEG_INFINITY; nv];
    let mut upper = vec![f64::INFINITY; nv];
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut in_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut seen_eq = HashSet::new();
    let mut seen_in = HashSet::new();

    for (s, scenario) in problem.scenarios().iter().enumerate() {
        let p = tree.probability(s);
        let cols = &map.columns[s];
        let qs = scenario.quadratic();
        for i in 0..cols.len() {
            c[cols[i]] += p * scenario.linear()[i];
            lower[cols[i]] = lower[cols[i]].max(scenario.lower()[i]);
            upper[cols[i]] = upper[cols[i]].min(scenario.upper()[i]);
            for j in 0..cols.len() {
                if qs[(i, j)] != 0.0 {
                    q[(cols[i], cols[j])] += p * qs[(i, j)];
                }
            }
        }
        collect_rows(scenario.a_eq(), scenario.b_eq().as_slice(), cols, &mut eq_rows, &mut seen_eq);
        collect_rows(scenario.a_in(), scenario.b_in().as_slice(), cols, &mut in_rows, &mut seen_in);
    }
    // Restore exact symmetry after the weighted accumulation.
    let q = (&q + q.transpose()) * 0.5;

    let dense = |rows: &[(Vec<(usize, f64)>, f64)]| {
        let mut a = DMatrix::zeros(rows.len(), nv);
        for (r, (entries, _)) in rows.iter().enumerate() {
            for &(j, v) in entries {
                a[(r, j)] = v;
            }
        }
        (a, rows.iter().map(|(_, b)| *b).collect::<Vec<_>>())
    };
    let (a_eq, b_eq) = dense(&eq_rows);
    let (a_in, b_in) = dense(&in_rows);
    let qp = QpScenarioProblem::builder(nv)
        .quadratic(q)
        .linear(c)
        .equalities(a_eq, b_eq)
        .inequalities(a_in, b_in)
        .lower_bounds(lower)
        .upper_bounds(upper)
        .build()
        .map_err(|e| SolveError::Config(format!("extensive form: {e}")))?;
    Ok((qp, map.columns))
}

fn collect_rows(
    a: &DMatrix<f64>,
    b: &[f64],
    cols: &[usize],
    out: &mut Vec<(Vec<(usize, f64)>, f64)>,
    seen: &mut HashSet<Vec<u64>>,
) {
    for r in 0..a.nrows() {
        let mut entries: Vec<(usize, f64)> =
            (0..a.ncols()).filter(|&j| a[(r, j)] != 0.0).map(|j| (cols[j], a[(r, j)])).collect();
        entries.sort_by_key(|e| e.0);
        let mut key: Vec<u64> = entries.iter().flat_map(|&(j, v)| [j as u64, v.to_bits()]).collect();
        key.push(b[r].to_bits());
        if seen.insert(key) {
            out.push((entries, b[r]));
        }
    }
}

/// Solves the deterministic equivalent and expands the node solution to
/// one row per scenario.
pub fn extensive_form(problem: &StochasticProblem, settings: &ExtensiveSettings) -> Result<ExtensiveSolution, SolveError> {
    let (qp, columns) = node_problem(problem)?;
    let prox_settings = ProxSettings::with_tol(settings.tol.min(1e-10));
    let mut ws = ProxWorkspace::new();
    let mut v = vec![0.0; qp.dim()];
    let mut mu = settings.mu_start;
    let mut converged = false;
    let mut outer = 0;
    while outer < settings.max_outer {
        outer += 1;
        let result = ws.solve(&qp, &v, mu, &prox_settings);
        let y = result.into_minimizer(0).map_err(|e| match e {
            SolveError::Infeasible { .. } => SolveError::Runtime("extensive form is infeasible".into()),
            other => other,
        })?;
        let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let change = y.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = y;
        if change <= settings.step_tol * scale {
            converged = true;
            break;
        }
        mu = (mu * settings.mu_growth).min(settings.mu_max);
    }
    if !converged {
        return Err(SolveError::Runtime(format!("extensive form did not converge in {outer} proximal steps")));
    }

    let mut x = problem.zeros();
    for (s, cols) in columns.iter().enumerate() {
        let row: Vec<f64> = cols.iter().map(|&k| v[k]).collect();
        x.set_row(s, &row);
    }
    let f_star = problem.expected_cost(&x)?;
    Ok(ExtensiveSolution { x, f_star, outer_iterations: outer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::HydroSpec;

    #[test]
    fn single_scenario_matches_direct_solve() {
        let problem = HydroSpec::new(2, 1, 4).generate().unwrap().build().unwrap();
        let sol = extensive_form(&problem, &ExtensiveSettings::default()).unwrap();
        // One stage: buying from outside costs more than turbining, so the
        // cheapest plan turbines all available water up to the demand.
        let params = HydroSpec::new(2, 1, 4).generate().unwrap();
        let water: f64 = params.w_init.iter().sum();
        let used: f64 = (0..2).map(|b| sol.x.get(0, params.y_index(0, b))).sum();
        assert!((used - water.min(params.demand)).abs() < 1e-8);
        assert!(problem.max_violation(&sol.x).unwrap() < 1e-9);
    }

    #[test]
    fn duplicates_are_removed_and_solution_is_nonanticipative() {
        let problem = HydroSpec::new(1, 3, 2).generate().unwrap().build().unwrap();
        let (qp, _) = node_problem(&problem).unwrap();
        // 7 nodes with one water balance and one demand and one capacity row each
        assert_eq!(qp.dim(), 7 * 3);
        assert_eq!(qp.num_equalities(), 7);
        assert_eq!(qp.num_inequalities(), 14);
        let sol = extensive_form(&problem, &ExtensiveSettings::default()).unwrap();
        assert_eq!(problem.tree().project_nonanticipative(&sol.x).unwrap(), sol.x);
    }
}
