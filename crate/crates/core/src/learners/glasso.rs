use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelId;

use super::lasso::soft_threshold;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlassoOptions {
    /// apply the l1 penalty to the diagonal of the precision matrix as well
    pub penalize_diagonal: bool,
    /// stop when no entry of the working covariance moves by more than this,
    /// relative to the mean diagonal of the sample covariance
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        GlassoOptions {
            penalize_diagonal: true,
            tolerance: 1e-12,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionFit {
    pub theta: DMatrix<f64>,
    pub lambda: f64,
    pub iterations: usize,
}

/// Maximum-likelihood covariance (divisor n) of the rows of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("covariance rows"));
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(centered.transpose() * &centered / n as f64)
}

pub fn glasso_fit(sample_cov: &DMatrix<f64>, lambda: f64) -> Result<PrecisionFit> {
    glasso_fit_with(sample_cov, lambda, &GlassoOptions::default())
}

/// Block coordinate descent over the columns of the working covariance `W`,
/// each step a LASSO problem in the corresponding column of `W^-1`.
pub fn glasso_fit_with(s: &DMatrix<f64>, lambda: f64, opts: &GlassoOptions) -> Result<PrecisionFit> {
    let d = s.nrows();
    if d == 0 || s.ncols() != d {
        return Err(Error::InvalidArgument("covariance must be square and nonempty".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample covariance"));
    }
    if (s - s.transpose()).amax() > 1e-9 * s.amax().max(1.0) {
        return Err(Error::InvalidArgument("sample covariance is not symmetric".into()));
    }
    let mut w = s.clone();
    if opts.penalize_diagonal {
        for i in 0..d {
            w[(i, i)] += lambda;
        }
    }
    if (0..d).any(|i| !(w[(i, i)] > 0.0)) {
        return Err(Error::SingularSystem);
    }
    let scale = s.diagonal().mean().abs().max(f64::MIN_POSITIVE);
    let mut betas = DMatrix::<f64>::zeros(d.saturating_sub(1), d);
    let mut sweeps = 0;
    while d > 1 {
        if sweeps == opts.max_sweeps {
            return Err(Error::NotConverged {
                what: "graphical lasso",
                iterations: sweeps,
            });
        }
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            let idx: Vec<usize> = (0..d).filter(|&k| k != j).collect();
            let w11 = w.select_rows(&idx).select_columns(&idx);
            let s12: Vec<f64> = idx.iter().map(|&k| s[(k, j)]).collect();
            let mut beta: Vec<f64> = betas.column(j).iter().copied().collect();
            column_lasso(&w11, &s12, lambda, &mut beta)?;
            let w12 = &w11 * nalgebra::DVector::from_column_slice(&beta);
            for (a, &k) in idx.iter().enumerate() {
                max_change = max_change.max((w12[a] - w[(k, j)]).abs());
                w[(k, j)] = w12[a];
                w[(j, k)] = w12[a];
            }
            betas.column_mut(j).copy_from_slice(&beta);
        }
        if max_change < opts.tolerance * scale {
            break;
        }
    }
    let mut theta = DMatrix::zeros(d, d);
    for j in 0..d {
        let idx: Vec<usize> = (0..d).filter(|&k| k != j).collect();
        let w12: f64 = idx
            .iter()
            .enumerate()
            .map(|(a, &k)| w[(k, j)] * betas[(a, j)])
            .sum();
        let t = 1.0 / (w[(j, j)] - w12);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::SingularSystem);
        }
        theta[(j, j)] = t;
        for (a, &k) in idx.iter().enumerate() {
            theta[(k, j)] = -betas[(a, j)] * t;
        }
    }
    let theta = (&theta + theta.transpose()) * 0.5;
    Ok(PrecisionFit {
        theta,
        lambda,
        iterations: sweeps,
    })
}

/// Minimizes `b'Vb/2 - s'b + lambda ||b||_1` by coordinate descent, in place.
fn column_lasso(v: &DMatrix<f64>, s: &[f64], lambda: f64, beta: &mut [f64]) -> Result<()> {
    let p = s.len();
    let mut vb: Vec<f64> = (0..p).map(|k| (0..p).map(|l| v[(k, l)] * beta[l]).sum()).collect();
    for _ in 0..100_000 {
        let mut max_change: f64 = 0.0;
        for k in 0..p {
            let vkk = v[(k, k)];
            let r = s[k] - (vb[k] - vkk * beta[k]);
            let new = soft_threshold(r, lambda) / vkk;
            let delta = new - beta[k];
            if delta != 0.0 {
                for (l, x) in vb.iter_mut().enumerate() {
                    *x += delta * v[(l, k)];
                }
                beta[k] = new;
                max_change = max_change.max(delta.abs() * vkk.sqrt());
            }
        }
        if max_change < 1e-14 * (1.0 + beta.iter().fold(0.0f64, |m, b| m.max(b.abs()))) {
            return Ok(());
        }
    }
    Err(Error::NotConverged {
        what: "graphical lasso column",
        iterations: 100_000,
    })
}

/// `log det theta - tr(S theta) - lambda ||theta||_1`.
pub fn glasso_objective(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let Some(chol) = theta.clone().cholesky() else {
        return f64::NEG_INFINITY;
    };
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = (s * theta).trace();
    let d = theta.nrows();
    let mut l1 = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k || penalize_diagonal {
                l1 += theta[(j, k)].abs();
            }
        }
    }
    log_det - trace - lambda * l1
}

/// Largest violation of the stationarity conditions
/// `theta^-1 - S = lambda sign(theta)` (subgradient on zero entries).
pub fn glasso_kkt_residual(theta: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let Some(w) = theta.clone().try_inverse() else {
        return f64::INFINITY;
    };
    let d = theta.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for k in 0..d {
            let g = w[(j, k)] - s[(j, k)];
            let t = theta[(j, k)];
            let r = if j == k && !penalize_diagonal {
                g.abs()
            } else if t == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * t.signum()).abs()
            };
            worst = worst.max(r);
        }
    }
    worst
}

/// Off-diagonal pairs `(j, k)`, `j < k`, with `|theta_jk| > threshold`.
pub fn edges_of(theta: &DMatrix<f64>, threshold: f64) -> ModelId {
    let d = theta.nrows();
    ModelId::edges(
        (0..d)
            .flat_map(|j| (j + 1..d).map(move |k| (j, k)))
            .filter(|&(j, k)| theta[(j, k)].abs() > threshold),
    )
}

/// Graphical LASSO on the sample covariance of the rows, then edge extraction.
pub fn glasso_selector(
    lambda: f64,
    opts: GlassoOptions,
    threshold: f64,
) -> impl Fn(&Dataset) -> Result<ModelId> + Sync {
    move |data| {
        let s = sample_covariance(data.x())?;
        Ok(edges_of(&glasso_fit_with(&s, lambda, &opts)?.theta, threshold))
    }
}
