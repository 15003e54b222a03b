use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

use super::RegressionFit;

/// Solves `(X'X + penalty I) B = X'Y`.
pub(crate) fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, penalty: f64) -> Result<DMatrix<f64>> {
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += penalty;
    }
    let rhs = x.transpose() * y;
    let chol = gram.clone().cholesky().ok_or(Error::SingularSystem)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return Err(Error::SingularSystem);
    }
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(sol)
}

/// Minimizes `(1/n)||y - X b||^2 + lambda ||b||^2` without intercept.
pub fn ridge_fit(data: &Dataset, lambda: f64) -> Result<RegressionFit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    let y = data.response()?;
    let n = data.n();
    if n == 0 || data.d() == 0 {
        return Err(Error::EmptyInput("design matrix"));
    }
    let y = DMatrix::from_column_slice(n, 1, y.as_slice());
    let beta = ridge_solve(data.x(), &y, lambda * n as f64)?;
    Ok(RegressionFit {
        beta: DVector::from_column_slice(beta.as_slice()),
        lambda,
        converged: true,
        iterations: 1,
    })
}

/// Coefficients of sequentially thresholded ridge regression.
#[derive(Clone, Debug, PartialEq)]
pub struct StridgeFit {
    /// p×d, one column per output dimension
    pub coefficients: DMatrix<f64>,
    /// output dimensions whose active set emptied
    pub null_dims: Vec<bool>,
}

impl StridgeFit {
    pub fn any_null(&self) -> bool {
        self.null_dims.iter().any(|&b| b)
    }
}

/// Per output column: ridge on the active terms, drop terms with
/// `|coef| < omega`, repeat until the active set is stable. The ridge penalty
/// is `lambda ||b||^2` on the unscaled residual sum of squares.
pub fn stridge_fit(
    library: &DMatrix<f64>,
    derivatives: &DMatrix<f64>,
    lambda: f64,
    omega: f64,
) -> Result<StridgeFit> {
    let (n, p) = library.shape();
    if derivatives.nrows() != n {
        return Err(Error::InvalidArgument(format!(
            "{} derivative rows for {n} library rows",
            derivatives.nrows()
        )));
    }
    if !(lambda >= 0.0 && omega >= 0.0 && lambda.is_finite() && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}, omega = {omega}")));
    }
    let dims = derivatives.ncols();
    let mut coefficients = DMatrix::zeros(p, dims);
    let mut null_dims = vec![false; dims];
    for k in 0..dims {
        let y = DMatrix::from_column_slice(n, 1, derivatives.column(k).as_slice());
        let mut active: Vec<usize> = (0..p).collect();
        let mut coef = vec![0.0; p];
        for _ in 0..=p {
            let sub = library.select_columns(&active);
            let fit = ridge_solve(&sub, &y, lambda)?;
            coef.iter_mut().for_each(|c| *c = 0.0);
            for (a, &j) in active.iter().enumerate() {
                coef[j] = fit[a];
            }
            let kept: Vec<usize> = active.iter().copied().filter(|&j| coef[j].abs() >= omega).collect();
            if kept.len() == active.len() {
                break;
            }
            active = kept;
            if active.is_empty() {
                coef.iter_mut().for_each(|c| *c = 0.0);
                null_dims[k] = true;
                break;
            }
        }
        coefficients.column_mut(k).copy_from_slice(&coef);
    }
    Ok(StridgeFit {
        coefficients,
        null_dims,
    })
}
