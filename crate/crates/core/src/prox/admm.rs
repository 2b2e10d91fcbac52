//! Operator-splitting iteration for `min ½xᵀPx + qᵀx s.t. l ≤ Ax ≤ u`.
//!
//! Each step solves one regularized linear system with a cached Cholesky
//! factor, then projects the constraint copy onto `[l, u]` and updates the
//! multipliers. Equality rows use a larger penalty. Periodically the
//! multipliers are handed to the active-set finisher, which usually turns a
//! moderately accurate iterate into an exact KKT point.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::active_set::{self, Side};
use super::problem::{QpScenarioProblem, StackedConstraints};
use super::{Multipliers, ProxResult, ProxSettings, ProxStatus};

const EQUALITY_RHO_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

struct Factor {
    key: (u64, u64),
    chol: Cholesky<f64, Dyn>,
}

/// Caller-owned solver state for one scenario: the last iterate,
/// multipliers and active set (used as the next warm start) plus the
/// cached factorization.
#[derive(Default)]
pub struct ProxWorkspace {
    x: Vec<f64>,
    zc: Vec<f64>,
    y: Vec<f64>,
    sides: Option<Vec<Side>>,
    rho: Option<f64>,
    factor: Option<Factor>,
    shape: Option<(usize, usize)>,
}

impl std::fmt::Debug for ProxWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProxWorkspace")
            .field("shape", &self.shape)
            .field("warm", &self.sides.is_some())
            .field("rho", &self.rho)
            .finish()
    }
}

impl ProxWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// One fresh workspace per scenario.
    pub fn batch(count: usize) -> Vec<Self> {
        (0..count).map(|_| Self::new()).collect()
    }

    /// Drops all warm-start state.
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    fn ensure_shape(&mut self, n: usize, m: usize) {
        if self.shape != Some((n, m)) {
            self.reset();
            self.shape = Some((n, m));
            self.x = vec![0.0; n];
            self.zc = vec![0.0; m];
            self.y = vec![0.0; m];
        }
    }

    /// Solves `argmin_y ½yᵀQy + cᵀy + (1/2μ)‖y − v‖²` over the problem's
    /// constraint set.
    pub fn solve(&mut self, problem: &QpScenarioProblem, v: &[f64], mu: f64, settings: &ProxSettings) -> ProxResult {
        let n = problem.dim();
        assert_eq!(v.len(), n, "prox anchor has the wrong length");
        assert!(mu > 0.0 && mu.is_finite(), "prox parameter must be positive");
        let st = problem.stacked();
        let m = st.len();
        self.ensure_shape(n, m);

        let mut p = problem.quadratic().clone();
        for j in 0..n {
            p[(j, j)] += 1.0 / mu;
        }
        let q = DVector::from_iterator(n, problem.linear().iter().zip(v).map(|(c, vj)| c - vj / mu));

        // Warm active set first, then the cold guess of no binding inequalities.
        let mut guesses = Vec::with_capacity(2);
        if let Some(sides) = &self.sides {
            guesses.push(sides.clone());
        }
        let cold = active_set::fixed_sides(st);
        if guesses.first() != Some(&cold) {
            guesses.push(cold);
        }
        for guess in guesses {
            if let Some(result) = self.finish(&p, &q, st, guess, settings, 0) {
                return result;
            }
        }
        self.iterate(problem, &p, &q, mu, settings)
    }

    fn finish(
        &mut self,
        p: &DMatrix<f64>,
        q: &DVector<f64>,
        st: &StackedConstraints,
        guess: Vec<Side>,
        settings: &ProxSettings,
        iterations: usize,
    ) -> Option<ProxResult> {
        let (point, sides) = active_set::solve(p, q, st, guess, settings.tol, settings.max_active_set_rounds)?;
        self.x = point.x.as_slice().to_vec();
        self.y = point.y.as_slice().to_vec();
        let ax = &st.a * &point.x;
        self.zc = (0..st.len()).map(|i| ax[i].clamp(st.lower[i], st.upper[i])).collect();
        self.sides = Some(sides);
        Some(ProxResult {
            y: self.x.clone(),
            multipliers: Multipliers::from_stacked(st, &self.y),
            primal_residual: point.primal_residual,
            dual_residual: point.dual_residual,
            inner_iterations: iterations,
            status: ProxStatus::Solved,
            polished: true,
        })
    }

    fn factor(&mut self, p: &DMatrix<f64>, st: &StackedConstraints, mu: f64, rho: f64, sigma: f64) -> bool {
        let key = (mu.to_bits(), rho.to_bits());
        if self.factor.as_ref().is_some_and(|f| f.key == key) {
            return true;
        }
        let n = p.nrows();
        let mut k = p.clone();
        for j in 0..n {
            k[(j, j)] += sigma;
        }
        let rho_rows = row_penalties(st, rho);
        let weighted = DMatrix::from_fn(st.len(), n, |i, j| rho_rows[i] * st.a[(i, j)]);
        k += st.a.tr_mul(&weighted);
        match Cholesky::new(k) {
            Some(chol) => {
                self.factor = Some(Factor { key, chol });
                true
            }
            None => false,
        }
    }

    fn iterate(
        &mut self,
        problem: &QpScenarioProblem,
        p: &DMatrix<f64>,
        q: &DVector<f64>,
        mu: f64,
        settings: &ProxSettings,
    ) -> ProxResult {
        let st = problem.stacked();
        let m = st.len();
        let sigma = settings.sigma;
        let alpha = settings.alpha;
        let mut rho = self.rho.unwrap_or(settings.rho);

        if !self.factor(p, st, mu, rho, sigma) {
            return self.failure(st, ProxStatus::MaxIterations, 0, f64::INFINITY, f64::INFINITY);
        }
        let mut rho_rows = row_penalties(st, rho);

        let mut x = DVector::from_column_slice(&self.x);
        let mut zc = DVector::from_column_slice(&self.zc);
        let mut y = DVector::from_column_slice(&self.y);
        let mut best: Option<(f64, DVector<f64>, DVector<f64>, f64, f64)> = None;
        let mut stall_best = f64::INFINITY;
        let mut stall_since = 0usize;

        for k in 1..=settings.max_iter {
            let shifted = DVector::from_fn(m, |i, _| rho_rows[i] * zc[i] - y[i]);
            let rhs = &x * sigma - q + st.a.tr_mul(&shifted);
            let x_tilde = self.factor.as_ref().expect("factor present").chol.solve(&rhs);
            let z_tilde = &st.a * &x_tilde;
            x = &x_tilde * alpha + &x * (1.0 - alpha);
            for i in 0..m {
                let relaxed = alpha * z_tilde[i] + (1.0 - alpha) * zc[i];
                let z_new = (relaxed + y[i] / rho_rows[i]).clamp(st.lower[i], st.upper[i]);
                y[i] += rho_rows[i] * (relaxed - z_new);
                zc[i] = z_new;
            }

            if k % settings.check_every != 0 && k != settings.max_iter {
                continue;
            }
            let ax = &st.a * &x;
            let px = p * &x;
            let aty = st.a.tr_mul(&y);
            let prim_abs = (&ax - &zc).amax();
            let dual_abs = (&px + q + &aty).amax();
            let prim = prim_abs / (1.0 + ax.amax().max(zc.amax()));
            let dual = dual_abs / (1.0 + px.amax().max(q.amax()).max(aty.amax()));
            let merit = prim.max(dual);
            if best.as_ref().is_none_or(|b| merit < b.0) {
                best = Some((merit, x.clone(), y.clone(), prim, dual));
            }

            if prim <= settings.tol && dual <= settings.tol {
                self.store(&x, &zc, &y, rho, st, settings);
                return ProxResult {
                    y: x.as_slice().to_vec(),
                    multipliers: Multipliers::from_stacked(st, y.as_slice()),
                    primal_residual: prim,
                    dual_residual: dual,
                    inner_iterations: k,
                    status: ProxStatus::Solved,
                    polished: false,
                };
            }

            if k % settings.polish_every == 0 || merit < settings.polish_threshold {
                let threshold = settings.tol * (1.0 + y.amax());
                let guess = active_set::sides_from_duals(st, y.as_slice(), threshold);
                self.rho = Some(rho);
                if let Some(result) = self.finish(p, q, st, guess, settings, k) {
                    return result;
                }
            }

            if prim < stall_best * 0.99 {
                stall_best = prim;
                stall_since = k;
            } else if prim > settings.stall_level && k - stall_since >= settings.stall_iterations {
                self.reset();
                return ProxResult {
                    y: x.as_slice().to_vec(),
                    multipliers: Multipliers::from_stacked(st, y.as_slice()),
                    primal_residual: prim,
                    dual_residual: dual,
                    inner_iterations: k,
                    status: ProxStatus::Infeasible,
                    polished: false,
                };
            }

            if settings.adapt_rho_every > 0 && k % settings.adapt_rho_every == 0 && m > 0 {
                let prim_norm = prim_abs / (1e-30 + ax.amax().max(zc.amax()));
                let dual_norm = dual_abs / (1e-30 + px.amax().max(q.amax()).max(aty.amax()));
                let ratio = (prim_norm / (dual_norm + 1e-30)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    if new_rho != rho && self.factor(p, st, mu, new_rho, sigma) {
                        rho = new_rho;
                        rho_rows = row_penalties(st, rho);
                    }
                }
            }
        }

        let (_, bx, by, prim, dual) = best.expect("at least one residual check");
        self.store(&bx, &zc, &by, rho, st, settings);
        ProxResult {
            y: bx.as_slice().to_vec(),
            multipliers: Multipliers::from_stacked(st, by.as_slice()),
            primal_residual: prim,
            dual_residual: dual,
            inner_iterations: settings.max_iter,
            status: ProxStatus::MaxIterations,
            polished: false,
        }
    }

    fn store(
        &mut self,
        x: &DVector<f64>,
        zc: &DVector<f64>,
        y: &DVector<f64>,
        rho: f64,
        st: &StackedConstraints,
        settings: &ProxSettings,
    ) {
        self.x = x.as_slice().to_vec();
        self.zc = zc.as_slice().to_vec();
        self.y = y.as_slice().to_vec();
        self.rho = Some(rho);
        let threshold = settings.tol * (1.0 + y.amax());
        self.sides = Some(active_set::sides_from_duals(st, y.as_slice(), threshold));
    }

    fn failure(&mut self, st: &StackedConstraints, status: ProxStatus, k: usize, prim: f64, dual: f64) -> ProxResult {
        ProxResult {
            y: self.x.clone(),
            multipliers: Multipliers::from_stacked(st, &self.y),
            primal_residual: prim,
            dual_residual: dual,
            inner_iterations: k,
            status,
            polished: false,
        }
    }
}

fn row_penalties(st: &StackedConstraints, rho: f64) -> Vec<f64> {
    (0..st.len())
        .map(|i| if st.lower[i] == st.upper[i] { rho * EQUALITY_RHO_SCALE } else { rho })
        .collect()
}
