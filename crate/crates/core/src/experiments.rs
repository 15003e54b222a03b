//! Synthetic regression data, flow-cytometry ingestion and the
//! cross-validation of the graphical LASSO penalty.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{glasso_fit_with, glasso_objective, sample_covariance, GlassoOptions};
use crate::model::ModelId;

/// Generator for trial data. Bags draw from streams `0..B` of their master
/// seed, data from the last stream, so equal seeds never share randomness.
pub fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

/// Unit diagonal, `rho` inside the blocks `{0,1}` and `{2,3,4}`.
pub fn make_covariance(d: usize, block_correlation: f64) -> Result<DMatrix<f64>> {
    if d < 5 {
        return Err(Error::InvalidArgument(format!("d = {d} must be at least 5")));
    }
    let block = |j: usize| match j {
        0 | 1 => Some(0),
        2..=4 => Some(1),
        _ => None,
    };
    Ok(DMatrix::from_fn(d, d, |j, k| {
        if j == k {
            1.0
        } else if block(j).is_some() && block(j) == block(k) {
            block_correlation
        } else {
            0.0
        }
    }))
}

/// A square root `F` of a covariance (`F F' = C`), by Cholesky when possible
/// and otherwise from the eigendecomposition with negative eigenvalues clipped.
pub fn covariance_factor(c: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = c.clone().cholesky() {
        return chol.l();
    }
    let eig = c.clone().symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionGenConfig {
    pub n: usize,
    pub d: usize,
    pub block_correlation: f64,
    pub noise_sd: f64,
    pub beta_support: Vec<usize>,
    pub beta_values: Vec<f64>,
}

impl RegressionGenConfig {
    pub fn small_n() -> Self {
        RegressionGenConfig {
            n: 30,
            d: 20,
            block_correlation: 0.99,
            noise_sd: 0.3,
            beta_support: vec![0, 2],
            beta_values: vec![1.0, 1.0],
        }
    }

    pub fn large_n() -> Self {
        RegressionGenConfig {
            n: 300,
            d: 200,
            noise_sd: 0.5,
            ..Self::small_n()
        }
    }

    pub fn truth(&self) -> ModelId {
        ModelId::variables(
            self.beta_support
                .iter()
                .zip(&self.beta_values)
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| *j),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if self.beta_support.len() != self.beta_values.len()
            || self.beta_support.iter().any(|&j| j >= self.d)
        {
            return Err(Error::InvalidArgument("coefficients do not fit the covariates".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sd = {}", self.noise_sd)));
        }
        Ok(())
    }
}

/// Rows `x ~ N(0, C)` and `y = x beta + noise`.
pub fn generate_regression_dataset(cfg: &RegressionGenConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let factor = covariance_factor(&make_covariance(cfg.d, cfg.block_correlation)?);
    let mut rng = data_rng(seed);
    let mut x = DMatrix::zeros(cfg.n, cfg.d);
    let mut y = DVector::zeros(cfg.n);
    let mut z = DVector::zeros(cfg.d);
    for i in 0..cfg.n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let row = &factor * &z;
        x.row_mut(i).copy_from(&row.transpose());
        let noise: f64 = StandardNormal.sample(&mut rng);
        y[i] = cfg
            .beta_support
            .iter()
            .zip(&cfg.beta_values)
            .map(|(&j, b)| b * row[j])
            .sum::<f64>()
            + cfg.noise_sd * noise;
    }
    Dataset::new(x, Some(y))
}

pub const CYTOMETRY_COLUMNS: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct CytometryData {
    pub data: Dataset,
    pub column_means: Vec<f64>,
}

/// Reads a headed CSV of 11 numeric protein columns, values as stored.
pub fn load_flow_cytometry(path: &Path) -> Result<CytometryData> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() != CYTOMETRY_COLUMNS || header.iter().all(String::is_empty) {
        return Err(Error::SchemaMismatch(format!(
            "expected {CYTOMETRY_COLUMNS} named columns, found {}",
            header.iter().filter(|h| !h.is_empty()).count()
        )));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != CYTOMETRY_COLUMNS {
            return Err(Error::SchemaMismatch(format!("row {} has {} fields", rows + 1, rec.len())));
        }
        for v in rec.iter() {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::SchemaMismatch(format!("row {}: `{v}` is not a number", rows + 1)))?;
            if !x.is_finite() {
                return Err(Error::SchemaMismatch(format!("row {}: non-finite value", rows + 1)));
            }
            values.push(x);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::SchemaMismatch("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(rows, CYTOMETRY_COLUMNS, &values);
    let column_means = x.column_iter().map(|c| c.mean()).collect();
    Ok(CytometryData {
        data: Dataset::new(x, None)?.with_column_names(header)?,
        column_means,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlassoCv {
    pub lambda: f64,
    /// `(lambda, mean validation score)` in grid order
    pub table: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlassoCvOptions {
    pub folds: usize,
    pub seed: u64,
    /// subtract the penalty from the validation score
    pub include_penalty: bool,
    pub glasso: GlassoOptions,
}

impl Default for GlassoCvOptions {
    fn default() -> Self {
        GlassoCvOptions {
            folds: 5,
            seed: 0,
            include_penalty: true,
            glasso: GlassoOptions::default(),
        }
    }
}

/// Mean held-out penalized log-likelihood per penalty; rows are shuffled with
/// the seed and cut into contiguous folds.
pub fn glasso_cv(data: &Dataset, lambda_grid: &[f64], opts: &GlassoCvOptions) -> Result<GlassoCv> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyInput("penalty grid"));
    }
    let n = data.n();
    if opts.folds < 2 || n < 2 * opts.folds {
        return Err(Error::InvalidArgument(format!("{} folds for {n} rows", opts.folds)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut data_rng(opts.seed));
    let blocks = crate::dynamics::contiguous_folds(n, opts.folds);
    let splits: Vec<(DMatrix<f64>, DMatrix<f64>)> = blocks
        .iter()
        .map(|b| {
            let val: Vec<usize> = order[b.clone()].to_vec();
            let train: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(p, _)| !b.contains(p))
                .map(|(_, &i)| i)
                .collect();
            Ok((
                sample_covariance(data.select_rows(&train).x())?,
                sample_covariance(data.select_rows(&val).x())?,
            ))
        })
        .collect::<Result<_>>()?;
    let table: Vec<(f64, f64)> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let mut total = 0.0;
            for (train, val) in &splits {
                let theta = glasso_fit_with(train, lambda, &opts.glasso)?.theta;
                let penalty = if opts.include_penalty { lambda } else { 0.0 };
                total += glasso_objective(&theta, val, penalty, opts.glasso.penalize_diagonal);
            }
            Ok((lambda, total / splits.len() as f64))
        })
        .collect::<Result<_>>()?;
    let (lambda, _) = table
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    if lambda.is_nan() {
        return Err(Error::NonFinite("validation score"));
    }
    Ok(GlassoCv { lambda, table })
}
