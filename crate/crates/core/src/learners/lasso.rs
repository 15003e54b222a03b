use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelId;

use super::RegressionFit;

pub const LASSO_TOLERANCE: f64 = 1e-10;
pub const LASSO_MAX_SWEEPS: usize = 100_000;

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `(1/n)||y - X b||^2 + lambda ||b||_1` without intercept.
pub fn lasso_fit(data: &Dataset, lambda: f64) -> Result<RegressionFit> {
    let y = data.response()?;
    lasso_fit_xy(data.x(), y.as_slice(), lambda)
}

pub fn lasso_fit_xy(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RegressionFit> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("design matrix"));
    }
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{} responses for {n} rows", y.len())));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lasso input"));
    }
    let nf = n as f64;
    let xs = x.as_slice();
    let col = |j: usize| &xs[j * n..(j + 1) * n];
    let curvature: Vec<f64> = (0..d).map(|j| dot(col(j), col(j)) / nf).collect();
    let mut beta = vec![0.0; d];
    let mut resid = y.to_vec();
    let half = lambda / 2.0;
    let mut full_sweep = true;
    let mut sweeps = 0;
    loop {
        if sweeps == LASSO_MAX_SWEEPS {
            return Err(Error::NotConverged {
                what: "lasso",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            if curvature[j] == 0.0 || (!full_sweep && beta[j] == 0.0) {
                continue;
            }
            let c = dot(col(j), &resid) / nf + curvature[j] * beta[j];
            let new = soft_threshold(c, half) / curvature[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for (r, xij) in resid.iter_mut().zip(col(j)) {
                    *r -= delta * xij;
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        // iterate on the active set, then confirm with a sweep over all coordinates
        if max_change < LASSO_TOLERANCE {
            if full_sweep {
                break;
            }
            full_sweep = true;
        } else {
            full_sweep = false;
        }
    }
    Ok(RegressionFit {
        beta: beta.into(),
        lambda,
        converged: true,
        iterations: sweeps,
    })
}

pub fn lasso_objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let fitted = x * nalgebra::DVector::from_column_slice(beta);
    let rss: f64 = fitted.iter().zip(y).map(|(f, y)| (y - f).powi(2)).sum();
    rss / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the subgradient optimality conditions.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let fitted = x * nalgebra::DVector::from_column_slice(beta);
    let resid: Vec<f64> = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let xs = x.as_slice();
    (0..x.ncols())
        .map(|j| {
            let g = -2.0 * dot(&xs[j * n..(j + 1) * n], &resid) / n as f64;
            if beta[j] == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g + lambda * beta[j].signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Indices with `|beta_j| > threshold`.
pub fn support_of(beta: &[f64], threshold: f64) -> ModelId {
    ModelId::variables(
        beta.iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > threshold)
            .map(|(j, _)| j),
    )
}

/// LASSO followed by support extraction, usable as a simple weighting.
pub fn lasso_selector(lambda: f64, threshold: f64) -> impl Fn(&Dataset) -> Result<ModelId> + Sync {
    move |data| Ok(support_of(lasso_fit(data, lambda)?.beta.as_slice(), threshold))
}
