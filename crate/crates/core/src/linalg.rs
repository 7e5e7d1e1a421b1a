use nalgebra::{DMatrix, DVector};

/// Ordinary least squares through the normal equations. `columns` are the
/// regressors (an intercept is prepended); returns `[intercept, b_1, ..]`,
/// or `None` when `X'X` is not positive definite.
pub(crate) fn ols(columns: &[&[f64]], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let p = columns.len() + 1;
    if n < p {
        return None;
    }
    let x = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { columns[k - 1][i] });
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * DVector::from_column_slice(y);
    let chol = xtx.cholesky()?;
    let beta = chol.solve(&xty);
    beta.iter().all(|b| b.is_finite()).then(|| beta.iter().copied().collect())
}
