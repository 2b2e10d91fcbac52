//! Exact finisher for the QP iteration.
//!
//! Given a guess of which constraints hold with equality, the solution of
//! the strongly convex problem is the solution of one linear KKT system.
//! The guess is corrected primal-dual style (violated rows enter, rows with
//! a wrong-signed multiplier leave) until it is self-consistent, then the
//! full KKT residual is verified. When the guess is right the result is
//! exact up to rounding and depends only on the final active set.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::problem::{RowKind, StackedConstraints};

/// Role of a stacked constraint row in an active-set guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Side {
    Free,
    Lower,
    Upper,
    /// Equality rows and bound rows with `l = u`: always active.
    Fixed,
}

#[derive(Debug, Clone)]
pub(crate) struct KktPoint {
    pub x: DVector<f64>,
    /// One multiplier per stacked row; positive means the upper side binds.
    pub y: DVector<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

const REFINEMENT_STEPS: usize = 10;

pub(crate) fn fixed_sides(st: &StackedConstraints) -> Vec<Side> {
    (0..st.len()).map(|i| if st.lower[i] == st.upper[i] { Side::Fixed } else { Side::Free }).collect()
}

/// Active-set guess read off a dual vector: rows whose multiplier magnitude
/// exceeds `threshold` are taken as binding on the side given by its sign.
pub(crate) fn sides_from_duals(st: &StackedConstraints, y: &[f64], threshold: f64) -> Vec<Side> {
    let mut sides = fixed_sides(st);
    for (i, side) in sides.iter_mut().enumerate() {
        if *side == Side::Fixed {
            continue;
        }
        if y[i] > threshold && st.upper[i].is_finite() {
            *side = Side::Upper;
        } else if y[i] < -threshold && st.lower[i].is_finite() {
            *side = Side::Lower;
        }
    }
    sides
}

/// Scaled primal residual (largest constraint violation) and dual residual
/// (stationarity) of `(x, y)` for `min ½xᵀPx + qᵀx s.t. l ≤ Ax ≤ u`.
pub(crate) fn kkt_residuals(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    st: &StackedConstraints,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> (f64, f64) {
    let ax = &st.a * x;
    let violation = (0..st.len()).fold(0.0f64, |m, i| m.max(st.lower[i] - ax[i]).max(ax[i] - st.upper[i]));
    let px = p * x;
    let aty = st.a.tr_mul(y);
    let stationarity = (&px + q + &aty).amax();
    let pscale = 1.0 + ax.amax();
    let dscale = 1.0 + px.amax().max(q.amax()).max(aty.amax());
    (violation / pscale, stationarity / dscale)
}

/// Runs the corrected active-set iteration from `initial`. Returns the
/// point and final sides when a KKT point within `tol` is reached.
pub(crate) fn solve(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    st: &StackedConstraints,
    initial: Vec<Side>,
    tol: f64,
    max_rounds: usize,
) -> Option<(KktPoint, Vec<Side>)> {
    let n = q.len();
    let m = st.len();
    let mut sides = initial;
    let mut seen: HashSet<Vec<Side>> = HashSet::new();
    let reg = 1e-10 * (1.0 + p.amax());

    for _ in 0..max_rounds {
        if !seen.insert(sides.clone()) {
            return None;
        }
        let active: Vec<usize> = (0..m).filter(|&i| sides[i] != Side::Free).collect();
        let (mut x, y_active) = solve_equality_kkt(p, q, st, &active, &sides, reg)?;
        // Active bounds hold exactly, not just to rounding.
        for &i in &active {
            if let RowKind::Bound(j) = st.kinds[i] {
                x[j] = match sides[i] {
                    Side::Upper => st.upper[i],
                    _ => st.lower[i],
                };
            }
        }
        let mut y = DVector::zeros(m);
        for (k, &i) in active.iter().enumerate() {
            y[i] = y_active[k];
        }

        let ax = &st.a * &x;
        let pscale = 1.0 + ax.amax();
        let dscale = 1.0 + (p * &x).amax().max(q.amax()).max(st.a.tr_mul(&y).amax());
        let mut changed = false;
        for i in 0..m {
            match sides[i] {
                Side::Fixed => {}
                Side::Free => {
                    if ax[i] > st.upper[i] + tol * pscale {
                        sides[i] = Side::Upper;
                        changed = true;
                    } else if ax[i] < st.lower[i] - tol * pscale {
                        sides[i] = Side::Lower;
                        changed = true;
                    }
                }
                Side::Lower => {
                    if y[i] > tol * dscale {
                        sides[i] = Side::Free;
                        changed = true;
                    }
                }
                Side::Upper => {
                    if y[i] < -tol * dscale {
                        sides[i] = Side::Free;
                        changed = true;
                    }
                }
            }
        }
        if changed {
            continue;
        }
        let (primal_residual, dual_residual) = kkt_residuals(p, q, st, &x, &y);
        if primal_residual <= tol && dual_residual <= tol && x.len() == n {
            return Some((KktPoint { x, y, primal_residual, dual_residual }, sides));
        }
        return None;
    }
    None
}

/// Solves `[P Aᵀ; A 0] [x; y] = [-q; b]` over the active rows, using a
/// slightly regularized factorization refined against the exact system.
fn solve_equality_kkt(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    st: &StackedConstraints,
    active: &[usize],
    sides: &[Side],
    reg: f64,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = q.len();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(p);
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -q[j];
    }
    for (r, &i) in active.iter().enumerate() {
        for j in 0..n {
            let a = st.a[(i, j)];
            kkt[(n + r, j)] = a;
            kkt[(j, n + r)] = a;
        }
        rhs[n + r] = match sides[i] {
            Side::Upper => st.upper[i],
            _ => st.lower[i],
        };
    }

    let mut regularized = kkt.clone();
    for r in 0..k {
        regularized[(n + r, n + r)] = -reg;
    }
    let lu = regularized.lu();
    let mut sol = lu.solve(&rhs)?;
    let rhs_scale = 1.0 + rhs.amax();
    let mut last = f64::INFINITY;
    for _ in 0..REFINEMENT_STEPS {
        let residual = &rhs - &kkt * &sol;
        let size = residual.amax();
        if size <= 1e-16 * rhs_scale || size >= last {
            break;
        }
        last = size;
        sol += lu.solve(&residual)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = sol.rows(0, n).into_owned();
    let y = sol.rows(n, k).into_owned();
    Some((x, y))
}
