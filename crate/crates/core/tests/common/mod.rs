//! Independent dense oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rphedge::iterate::IterateMatrix;
use rphedge::prox::QpScenarioProblem;
use rphedge::tree::ScenarioTree;

/// Weighted least squares onto `{x : x^s_j = x^σ_j for σ in the stage-t
/// bundle of s}`, solved as a dense KKT system over all `S·n` unknowns.
pub fn dense_projection(tree: &ScenarioTree, z: &IterateMatrix) -> IterateMatrix {
    let (s_count, n) = z.dims();
    let vars = s_count * n;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    for t in 0..tree.num_stages() {
        for bundle in tree.partition(t) {
            for pair in bundle.windows(2) {
                for j in tree.layout().stage_range(t) {
                    rows.push(vec![(pair[0] * n + j, 1.0), (pair[1] * n + j, -1.0)]);
                }
            }
        }
    }
    let m = rows.len();
    let mut k = DMatrix::zeros(vars + m, vars + m);
    let mut rhs = DVector::zeros(vars + m);
    for s in 0..s_count {
        let p = tree.probability(s);
        for j in 0..n {
            k[(s * n + j, s * n + j)] = p;
            rhs[s * n + j] = p * z.get(s, j);
        }
    }
    for (r, entries) in rows.iter().enumerate() {
        for &(col, v) in entries {
            k[(vars + r, col)] = v;
            k[(col, vars + r)] = v;
        }
    }
    let sol = k.lu().solve(&rhs).expect("nonsingular KKT system");
    IterateMatrix::from_vec(s_count, n, sol.as_slice()[..vars].to_vec()).unwrap()
}

/// Inequality rows `g·y ≤ h` of a scenario problem including finite bounds.
fn inequality_rows(problem: &QpScenarioProblem) -> Vec<(Vec<f64>, f64)> {
    let n = problem.dim();
    let mut rows = Vec::new();
    for i in 0..problem.num_inequalities() {
        rows.push(((0..n).map(|j| problem.a_in()[(i, j)]).collect(), problem.b_in()[i]));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        if problem.upper()[j].is_finite() {
            e[j] = 1.0;
            rows.push((e.clone(), problem.upper()[j]));
        }
        if problem.lower()[j].is_finite() {
            e[j] = -1.0;
            rows.push((e, -problem.lower()[j]));
        }
    }
    rows
}

/// Minimizes `½yᵀHy + gᵀy` over the problem's feasible set by solving the
/// equality-constrained problem for every subset of inequality rows taken
/// as active and keeping the best feasible candidate. `H` must be positive
/// definite.
pub fn enumerate_active_sets(problem: &QpScenarioProblem, h: &DMatrix<f64>, g: &DVector<f64>) -> Vec<f64> {
    let n = problem.dim();
    let ineq = inequality_rows(problem);
    assert!(ineq.len() <= 16, "too many rows to enumerate");
    let eq: Vec<(Vec<f64>, f64)> = (0..problem.num_equalities())
        .map(|i| ((0..n).map(|j| problem.a_eq()[(i, j)]).collect(), problem.b_eq()[i]))
        .collect();
    let objective = |y: &DVector<f64>| 0.5 * y.dot(&(h * y)) + g.dot(y);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << ineq.len()) {
        let active: Vec<&(Vec<f64>, f64)> =
            eq.iter().chain(ineq.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, r)| r)).collect();
        let m = active.len();
        if m > n {
            continue;
        }
        let mut k = DMatrix::zeros(n + m, n + m);
        let mut rhs = DVector::zeros(n + m);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        for j in 0..n {
            rhs[j] = -g[j];
        }
        for (r, (a, b)) in active.iter().enumerate() {
            for j in 0..n {
                k[(n + r, j)] = a[j];
                k[(j, n + r)] = a[j];
            }
            rhs[n + r] = *b;
        }
        let svd = k.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-11 * smax.max(1.0) {
            continue;
        }
        let Ok(sol) = svd.solve(&rhs, 1e-14) else { continue };
        let y = DVector::from_iterator(n, sol.iter().take(n).copied());
        let feasible = ineq.iter().all(|(a, b)| DVector::from_column_slice(a).dot(&y) <= b + 1e-9)
            && eq.iter().all(|(a, b)| (DVector::from_column_slice(a).dot(&y) - b).abs() <= 1e-9);
        if !feasible {
            continue;
        }
        let f = objective(&y);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, y));
        }
    }
    best.expect("a feasible problem has a feasible active set").1.as_slice().to_vec()
}

/// Brute-force `argmin ½yᵀQy + cᵀy + (1/2μ)‖y − v‖²` over the feasible set.
pub fn brute_force_prox(problem: &QpScenarioProblem, v: &[f64], mu: f64) -> Vec<f64> {
    let n = problem.dim();
    let h = problem.quadratic() + DMatrix::identity(n, n) / mu;
    let g = problem.linear() - DVector::from_column_slice(v) / mu;
    enumerate_active_sets(problem, &h, &g)
}

/// Optimal value of a linear program `min cᵀx` over `A_eq x = b_eq`,
/// `A_in x ≤ b_in`, `x ≥ 0` by vertex enumeration.
pub fn lp_vertex_optimum(c: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64], a_in: &[Vec<f64>], b_in: &[f64]) -> (f64, Vec<f64>) {
    let n = c.len();
    let mut ineq: Vec<(Vec<f64>, f64)> = a_in.iter().cloned().zip(b_in.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        ineq.push((e, 0.0));
    }
    let need = n - a_eq.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut chosen = Vec::with_capacity(need);
    combinations(ineq.len(), need, 0, &mut chosen, &mut |subset| {
        let mut k = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (r, (a, b)) in a_eq.iter().zip(b_eq).chain(subset.iter().map(|&i| (&ineq[i].0, &ineq[i].1))).enumerate() {
            for j in 0..n {
                k[(r, j)] = a[j];
            }
            rhs[r] = *b;
        }
        let Some(x) = k.lu().solve(&rhs) else { return };
        if x.iter().any(|v| !v.is_finite()) {
            return;
        }
        let check = DMatrix::from_fn(n, n, |r, j| if r < a_eq.len() { a_eq[r][j] } else { ineq[subset[r - a_eq.len()]].0[j] });
        if ((&check * &x) - &rhs).amax() > 1e-9 {
            return;
        }
        let feasible = ineq.iter().all(|(a, b)| a.iter().zip(x.iter()).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
        if !feasible {
            return;
        }
        let f: f64 = c.iter().zip(x.iter()).map(|(u, v)| u * v).sum();
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x.as_slice().to_vec()));
        }
    });
    best.expect("bounded feasible LP has a vertex")
}

fn combinations(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for i in start..total {
        if total - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        combinations(total, k, i + 1, chosen, visit);
        chosen.pop();
    }
}
