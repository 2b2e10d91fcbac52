use nalgebra::{DMatrix, DVector};

use crate::error::ProblemError;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
/// Largest dimension for which positive semidefiniteness is checked by an
/// eigenvalue decomposition at construction.
const PSD_CHECK_MAX_DIM: usize = 300;

/// Which original constraint a stacked row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RowKind {
    Equality(usize),
    Inequality(usize),
    Bound(usize),
}

/// All constraints as `l ≤ A y ≤ u`: equality rows first, then
/// inequality rows, then one identity row per coordinate with a finite bound.
#[derive(Debug, Clone)]
pub(crate) struct StackedConstraints {
    pub a: DMatrix<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kinds: Vec<RowKind>,
}

impl StackedConstraints {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }
}

/// Convex quadratic scenario cost over a polyhedron:
/// `½ yᵀQy + cᵀy` subject to `A_eq y = b_eq`, `A_in y ≤ b_in`,
/// `lower ≤ y ≤ upper`.
#[derive(Debug, Clone)]
pub struct QpScenarioProblem {
    q: DMatrix<f64>,
    c: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    b_in: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    stacked: StackedConstraints,
}

impl QpScenarioProblem {
    pub fn builder(n: usize) -> QpBuilder {
        QpBuilder::new(n)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn a_in(&self) -> &DMatrix<f64> {
        &self.a_in
    }

    pub fn b_in(&self) -> &DVector<f64> {
        &self.b_in
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn num_equalities(&self) -> usize {
        self.b_eq.len()
    }

    pub fn num_inequalities(&self) -> usize {
        self.b_in.len()
    }

    pub(crate) fn stacked(&self) -> &StackedConstraints {
        &self.stacked
    }

    /// `½ yᵀQy + cᵀy`, the cost without the constraint indicator.
    pub fn objective(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        0.5 * y.dot(&(&self.q * &y)) + self.c.dot(&y)
    }

    /// Largest violation over all equality, inequality and bound constraints.
    pub fn constraint_violation(&self, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        let eq = (&self.a_eq * &yv - &self.b_eq).amax();
        let ineq = (&self.a_in * &yv - &self.b_in).iter().fold(0.0f64, |m, r| m.max(*r));
        let bounds = y
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0f64, |m, (v, (l, u))| m.max(l - v).max(v - u));
        eq.max(ineq).max(bounds)
    }
}

/// Incremental construction of a [`QpScenarioProblem`]; unspecified parts
/// default to zero cost, no constraints and free variables.
#[derive(Debug, Clone)]
pub struct QpBuilder {
    n: usize,
    q: Option<DMatrix<f64>>,
    c: Option<Vec<f64>>,
    eq: Option<(DMatrix<f64>, Vec<f64>)>,
    ineq: Option<(DMatrix<f64>, Vec<f64>)>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
}

impl QpBuilder {
    fn new(n: usize) -> Self {
        Self { n, q: None, c: None, eq: None, ineq: None, lower: None, upper: None }
    }

    pub fn quadratic(mut self, q: DMatrix<f64>) -> Self {
        self.q = Some(q);
        self
    }

    pub fn linear(mut self, c: Vec<f64>) -> Self {
        self.c = Some(c);
        self
    }

    pub fn equalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.eq = Some((a, b));
        self
    }

    pub fn inequalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.ineq = Some((a, b));
        self
    }

    pub fn lower_bounds(mut self, lower: Vec<f64>) -> Self {
        self.lower = Some(lower);
        self
    }

    pub fn upper_bounds(mut self, upper: Vec<f64>) -> Self {
        self.upper = Some(upper);
        self
    }

    pub fn build(self) -> Result<QpScenarioProblem, ProblemError> {
        let n = self.n;
        let q = self.q.unwrap_or_else(|| DMatrix::zeros(n, n));
        check_shape("Q", &q, n, n)?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("Q"));
        }
        let scale = q.amax().max(1.0);
        let asym = (&q - q.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(ProblemError::Asymmetric(asym));
        }
        if n > 0 && n <= PSD_CHECK_MAX_DIM && q.amax() > 0.0 {
            let sym = (&q + q.transpose()) * 0.5;
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -PSD_TOL * q.amax() {
                return Err(ProblemError::NotPsd(min_eig));
            }
        }

        let c = self.c.unwrap_or_else(|| vec![0.0; n]);
        check_len("c", &c, n)?;
        finite("c", &c)?;

        let (a_eq, b_eq) = self.eq.unwrap_or_else(|| (DMatrix::zeros(0, n), Vec::new()));
        check_shape("A_eq", &a_eq, b_eq.len(), n)?;
        finite("A_eq", a_eq.as_slice())?;
        finite("b_eq", &b_eq)?;

        let (a_in, b_in) = self.ineq.unwrap_or_else(|| (DMatrix::zeros(0, n), Vec::new()));
        check_shape("A_in", &a_in, b_in.len(), n)?;
        finite("A_in", a_in.as_slice())?;
        if b_in.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(ProblemError::NonFinite("b_in"));
        }

        let lower = self.lower.unwrap_or_else(|| vec![f64::NEG_INFINITY; n]);
        let upper = self.upper.unwrap_or_else(|| vec![f64::INFINITY; n]);
        check_len("lower", &lower, n)?;
        check_len("upper", &upper, n)?;
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(ProblemError::NonFinite("bounds"));
            }
            if l > u {
                return Err(ProblemError::CrossedBounds { index: j, lower: *l, upper: *u });
            }
        }

        let stacked = stack(&a_eq, &b_eq, &a_in, &b_in, &lower, &upper);
        Ok(QpScenarioProblem {
            q,
            c: DVector::from_vec(c),
            a_eq,
            b_eq: DVector::from_vec(b_eq),
            a_in,
            b_in: DVector::from_vec(b_in),
            lower,
            upper,
            stacked,
        })
    }
}

fn stack(
    a_eq: &DMatrix<f64>,
    b_eq: &[f64],
    a_in: &DMatrix<f64>,
    b_in: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> StackedConstraints {
    let n = lower.len();
    let bounded: Vec<usize> = (0..n).filter(|&j| lower[j].is_finite() || upper[j].is_finite()).collect();
    let m = b_eq.len() + b_in.len() + bounded.len();
    let mut a = DMatrix::zeros(m, n);
    let mut lo = Vec::with_capacity(m);
    let mut hi = Vec::with_capacity(m);
    let mut kinds = Vec::with_capacity(m);
    let mut row = 0;
    for i in 0..b_eq.len() {
        a.row_mut(row).copy_from(&a_eq.row(i));
        lo.push(b_eq[i]);
        hi.push(b_eq[i]);
        kinds.push(RowKind::Equality(i));
        row += 1;
    }
    for i in 0..b_in.len() {
        a.row_mut(row).copy_from(&a_in.row(i));
        lo.push(f64::NEG_INFINITY);
        hi.push(b_in[i]);
        kinds.push(RowKind::Inequality(i));
        row += 1;
    }
    for &j in &bounded {
        a[(row, j)] = 1.0;
        lo.push(lower[j]);
        hi.push(upper[j]);
        kinds.push(RowKind::Bound(j));
        row += 1;
    }
    StackedConstraints { a, lower: lo, upper: hi, kinds }
}

fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<(), ProblemError> {
    if v.len() != expected {
        return Err(ProblemError::Length { what, expected, found: v.len() });
    }
    Ok(())
}

fn check_shape(what: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<(), ProblemError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ProblemError::Shape {
            what,
            expected_rows: rows,
            expected_cols: cols,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn finite(what: &'static str, v: &[f64]) -> Result<(), ProblemError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite(what));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_quadratic() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = QpScenarioProblem::builder(2).quadratic(q).build().unwrap_err();
        assert!(matches!(err, ProblemError::Asymmetric(_)));
    }

    #[test]
    fn rejects_indefinite_quadratic() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = QpScenarioProblem::builder(2).quadratic(q).build().unwrap_err();
        assert!(matches!(err, ProblemError::NotPsd(_)));
    }

    #[test]
    fn rejects_crossed_bounds_and_bad_lengths() {
        let err = QpScenarioProblem::builder(2)
            .lower_bounds(vec![0.0, 2.0])
            .upper_bounds(vec![1.0, 1.0])
            .build()
            .unwrap_err();
        assert!(matches!(err, ProblemError::CrossedBounds { index: 1, .. }));
        assert!(QpScenarioProblem::builder(2).linear(vec![1.0]).build().is_err());
        let a = DMatrix::zeros(1, 3);
        assert!(QpScenarioProblem::builder(2).inequalities(a, vec![0.0]).build().is_err());
    }

    #[test]
    fn stacking_skips_free_coordinates() {
        let p = QpScenarioProblem::builder(3)
            .equalities(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]), vec![1.0])
            .lower_bounds(vec![0.0, f64::NEG_INFINITY, 0.0])
            .build()
            .unwrap();
        let st = p.stacked();
        assert_eq!(st.len(), 3);
        assert_eq!(st.kinds, vec![RowKind::Equality(0), RowKind::Bound(0), RowKind::Bound(2)]);
    }

    #[test]
    fn objective_and_violation() {
        let p = QpScenarioProblem::builder(2)
            .quadratic(DMatrix::identity(2, 2))
            .linear(vec![1.0, -1.0])
            .inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![1.0])
            .lower_bounds(vec![0.0, 0.0])
            .build()
            .unwrap();
        assert_eq!(p.objective(&[1.0, 2.0]), 0.5 * 5.0 - 1.0);
        assert_eq!(p.constraint_violation(&[1.0, 2.0]), 2.0);
        assert_eq!(p.constraint_violation(&[-0.5, 0.0]), 0.5);
        assert_eq!(p.constraint_violation(&[0.5, 0.5]), 0.0);
    }
}
