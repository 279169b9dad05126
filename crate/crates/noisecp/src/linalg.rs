//! Small dense helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest 1-norm condition number accepted by [`invert`].
pub const MAX_CONDITION: f64 = 1e10;

/// Maximum absolute column sum.
pub fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Inverts a square matrix by LU with partial pivoting, refusing matrices whose
/// 1-norm condition number exceeds [`MAX_CONDITION`].
pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularM(f64::INFINITY))?;
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::SingularM(cond));
    }
    Ok(inv)
}

pub fn row_sums(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.sum()).collect()
}

/// Sum of `|m[(k, l)]|` over `l != k`.
pub fn offdiag_abs_row_sum(m: &DMatrix<f64>, k: usize) -> f64 {
    (0..m.ncols()).filter(|&l| l != k).map(|l| m[(k, l)].abs()).sum()
}

/// Sum of `|m[(k, l)]|` over all `l`.
pub fn abs_row_sum(m: &DMatrix<f64>, k: usize) -> f64 {
    (0..m.ncols()).map(|l| m[(k, l)].abs()).sum()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
