use nalgebra::DMatrix;

use crate::error::{CliError, Result};
use crate::problem_file::{check_unique, Triplet};

pub(crate) fn dense(entries: &[Triplet], rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>> {
    check_unique(entries, name)?;
    let mut m = DMatrix::zeros(rows, cols);
    for &(r, c, v) in entries {
        if r >= rows || c >= cols {
            return Err(CliError::parse(format!("{name}: entry ({r}, {c}) outside a {rows}x{cols} matrix")));
        }
        if !v.is_finite() {
            return Err(CliError::parse(format!("{name}: entry ({r}, {c}) is not finite")));
        }
        m[(r, c)] = v;
    }
    Ok(m)
}

/// Entries other than `+0.0`, in row-major order.
pub(crate) fn triplets(m: &DMatrix<f64>) -> Vec<Triplet> {
    let mut out = Vec::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            // Keep negative zeros so round trips are bitwise.
            if m[(r, c)].to_bits() != 0 {
                out.push((r, c, m[(r, c)]));
            }
        }
    }
    out
}
