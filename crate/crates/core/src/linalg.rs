use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// `log det(M)` for symmetric positive-definite `M`, via the Cholesky diagonal.
pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    logdet_spd_owned(m.clone())
}

pub fn logdet_spd_owned(m: DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m)?;
    Ok(logdet_from_cholesky(&chol))
}

pub(crate) fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch { expected: m.nrows(), got: m.ncols() });
    }
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite)
}

pub(crate) fn logdet_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Adds `values` to the diagonal of `m` in place.
pub(crate) fn add_diagonal(m: &mut DMatrix<f64>, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        m[(i, i)] += v;
    }
}

/// Adds the identity to a square `m` in place.
pub(crate) fn add_identity(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    add_diagonal(m, std::iter::repeat_n(1.0, n));
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Lower-median-averaged median; `None` on empty input.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}
