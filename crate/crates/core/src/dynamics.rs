//! Lotka-Volterra data, the quadratic library and SINDy selection.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{stridge_fit, StridgeFit};
use crate::model::ModelId;

pub const TERM_NAMES: [&str; 6] = ["1", "u1", "u2", "u1^2", "u1*u2", "u2^2"];
pub const DEFAULT_MAX_STEP: f64 = 1e-3;
/// States beyond this magnitude count as a blow-up.
const BLOW_UP: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LVParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl Default for LVParams {
    fn default() -> Self {
        LVParams {
            alpha: 2.0 / 3.0,
            beta: 4.0 / 3.0,
            gamma: 1.0,
            zeta: 1.0,
        }
    }
}

impl LVParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.zeta];
        if all.iter().all(|&p| p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("rates must be positive: {self:?}")))
        }
    }

    /// `zeta u1 - gamma ln u1 + beta u2 - alpha ln u2`, constant along orbits.
    pub fn conserved(&self, u: &[f64]) -> f64 {
        self.zeta * u[0] - self.gamma * u[0].ln() + self.beta * u[1] - self.alpha * u[1].ln()
    }

    /// Coefficients of the true model on the quadratic library.
    pub fn true_coefficients(&self) -> DMatrix<f64> {
        let mut xi = DMatrix::zeros(6, 2);
        xi[(1, 0)] = self.alpha;
        xi[(4, 0)] = -self.beta;
        xi[(2, 1)] = -self.gamma;
        xi[(4, 1)] = self.zeta;
        xi
    }
}

pub fn lv_rhs(p: &LVParams, u: &[f64]) -> [f64; 2] {
    [
        p.alpha * u[0] - p.beta * u[0] * u[1],
        -p.gamma * u[1] + p.zeta * u[0] * u[1],
    ]
}

/// The equation support of the true Lotka-Volterra model.
pub fn lv_true_model() -> ModelId {
    ModelId::equations([vec![1, 4], vec![2, 4]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times for {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        if let Some(first) = states.first() {
            if states.iter().any(|s| s.len() != first.len()) {
                return Err(Error::InvalidArgument("states of unequal dimension".into()));
            }
        }
        if times.iter().chain(states.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn state_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim(), |i, k| self.states[i][k])
    }

    /// CSV with header `t,u1,u2,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("u{k}")));
        w.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let expected: Vec<String> = std::iter::once("t".to_string())
            .chain((1..header.len()).map(|k| format!("u{k}")))
            .collect();
        if header.len() < 2 || header.iter().zip(&expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::SchemaMismatch(format!(
                "trajectory header must be t,u1,u2,...; found {header:?}"
            )));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::SchemaMismatch(format!("bad number in {path:?}: {e}")))?;
            times.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        Trajectory::new(times, states)
    }
}

/// Classical RK4 through the requested times, with internal steps no longer
/// than `max_step`.
pub fn integrate<F>(rhs: F, u0: &[f64], times: &[f64], max_step: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    if times.is_empty() {
        return Err(Error::EmptyInput("times"));
    }
    if !(max_step > 0.0) {
        return Err(Error::InvalidArgument(format!("max_step = {max_step}")));
    }
    let d = u0.len();
    let mut u = u0.to_vec();
    let mut states = vec![u.clone()];
    let mut tmp = vec![0.0; d];
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if !(t1 > t0) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        let steps = ((t1 - t0) / max_step).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let k1 = rhs(t, &u);
            for i in 0..d {
                tmp[i] = u[i] + 0.5 * h * k1[i];
            }
            let k2 = rhs(t + 0.5 * h, &tmp);
            for i in 0..d {
                tmp[i] = u[i] + 0.5 * h * k2[i];
            }
            let k3 = rhs(t + 0.5 * h, &tmp);
            for i in 0..d {
                tmp[i] = u[i] + h * k3[i];
            }
            let k4 = rhs(t + h, &tmp);
            for i in 0..d {
                u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if u.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
                return Err(Error::NonFinite("integrated state"));
            }
        }
        states.push(u.clone());
    }
    Trajectory::new(times.to_vec(), states)
}

/// `n_points` evenly spaced times on `[0, t_max]`.
pub fn even_grid(n_points: usize, t_max: f64) -> Vec<f64> {
    if n_points == 1 {
        return vec![0.0];
    }
    (0..n_points)
        .map(|i| t_max * i as f64 / (n_points - 1) as f64)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LVConfig {
    pub params: LVParams,
    pub u0: [f64; 2],
    pub n_points: usize,
    pub t_max: f64,
    pub noise_sd: f64,
}

impl Default for LVConfig {
    fn default() -> Self {
        LVConfig {
            params: LVParams::default(),
            u0: [1.0, 1.0],
            n_points: 21,
            t_max: 16.0,
            noise_sd: 0.05,
        }
    }
}

pub fn clean_lv_trajectory(cfg: &LVConfig) -> Result<Trajectory> {
    cfg.params.validate()?;
    if cfg.n_points < 2 || !(cfg.t_max > 0.0) {
        return Err(Error::InvalidArgument("need at least two time points on a positive span".into()));
    }
    let p = cfg.params;
    integrate(
        |_, u| lv_rhs(&p, u).to_vec(),
        &cfg.u0,
        &even_grid(cfg.n_points, cfg.t_max),
        DEFAULT_MAX_STEP,
    )
}

/// Independent Gaussian noise on every component after the initial time.
pub fn add_noise(clean: &Trajectory, noise_sd: f64, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sd = {noise_sd}")));
    }
    let mut states = clean.states.clone();
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).expect("positive finite sd");
        for s in states.iter_mut().skip(1) {
            for v in s.iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    Trajectory::new(clean.times.clone(), states)
}

pub fn generate_lv_dataset(cfg: &LVConfig, seed: u64) -> Result<Trajectory> {
    let clean = clean_lv_trajectory(cfg)?;
    add_noise(&clean, cfg.noise_sd, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Columns `(1, u1, u2, u1^2, u1*u2, u2^2)`.
pub fn build_library(traj: &Trajectory) -> Result<DMatrix<f64>> {
    if traj.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "the quadratic library needs 2 states, got {}",
            traj.dim()
        )));
    }
    Ok(library_rows(traj.states.iter().map(|s| [s[0], s[1]])))
}

fn library_rows<I: ExactSizeIterator<Item = [f64; 2]>>(rows: I) -> DMatrix<f64> {
    let n = rows.len();
    let mut lib = DMatrix::zeros(n, 6);
    for (i, [a, b]) in rows.enumerate() {
        let row = [1.0, a, b, a * a, a * b, b * b];
        for (j, v) in row.into_iter().enumerate() {
            lib[(i, j)] = v;
        }
    }
    lib
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeScheme {
    /// three-point stencils, second order
    SecondOrder,
    /// five-point stencils, fourth order
    #[default]
    FourthOrder,
}

impl DerivativeScheme {
    fn width(self) -> usize {
        match self {
            DerivativeScheme::SecondOrder => 3,
            DerivativeScheme::FourthOrder => 5,
        }
    }
}

/// Finite-difference weights for the first derivative at `z` from the nodes
/// `x` (Fornberg's recursion).
pub fn fd_weights(z: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = 1;
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|r| r[1]).collect()
}

/// Time derivatives of every state component. Interior points use centered
/// stencils, points near the ends one-sided stencils of the same width.
pub fn estimate_derivatives(traj: &Trajectory, scheme: DerivativeScheme) -> Result<DMatrix<f64>> {
    let n = traj.len();
    let width = scheme.width();
    if n < width {
        return Err(Error::TooFewPoints { needed: width, got: n });
    }
    let mut out = DMatrix::zeros(n, traj.dim());
    for i in 0..n {
        let lo = i.saturating_sub(width / 2).min(n - width);
        let w = fd_weights(traj.times[i], &traj.times[lo..lo + width]);
        for k in 0..traj.dim() {
            out[(i, k)] = (0..width).map(|a| w[a] * traj.states[lo + a][k]).sum();
        }
    }
    Ok(out)
}

/// Library rows paired with derivative rows; the regression data of SINDy.
pub fn sindy_dataset(traj: &Trajectory, scheme: DerivativeScheme) -> Result<Dataset> {
    let lib = build_library(traj)?;
    let deriv = estimate_derivatives(traj, scheme)?;
    let names = TERM_NAMES.iter().map(|s| s.to_string()).collect();
    Dataset::with_targets(lib, Some(deriv))?.with_column_names(names)
}

/// Per-dimension nonzero pattern of the coefficient matrix.
pub fn equation_support(xi: &DMatrix<f64>) -> ModelId {
    ModelId::equations(
        xi.column_iter()
            .map(|c| c.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect::<Vec<_>>()),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SindySelection {
    pub model: ModelId,
    pub fit: StridgeFit,
}

pub fn sindy_fit(data: &Dataset, lambda: f64, omega: f64) -> Result<SindySelection> {
    let y = data.y().ok_or(Error::EmptyInput("derivatives"))?;
    let fit = stridge_fit(data.x(), y, lambda, omega)?;
    Ok(SindySelection {
        model: equation_support(&fit.coefficients),
        fit,
    })
}

pub fn sindy_select(traj: &Trajectory, lambda: f64, omega: f64) -> Result<SindySelection> {
    sindy_fit(&sindy_dataset(traj, DerivativeScheme::default())?, lambda, omega)
}

/// STRidge support on library/derivative rows, usable as a simple weighting.
pub fn sindy_selector(lambda: f64, omega: f64) -> impl Fn(&Dataset) -> Result<ModelId> + Sync {
    move |data| Ok(sindy_fit(data, lambda, omega)?.model)
}

/// Integrates `du/dt = xi' theta(u)` through `times`.
pub fn simulate_model(xi: &DMatrix<f64>, u0: &[f64], times: &[f64]) -> Result<Trajectory> {
    integrate(
        |_, u| {
            let row = [1.0, u[0], u[1], u[0] * u[0], u[0] * u[1], u[1] * u[1]];
            (0..xi.ncols())
                .map(|k| (0..6).map(|j| row[j] * xi[(j, k)]).sum())
                .collect()
        },
        u0,
        times,
        DEFAULT_MAX_STEP,
    )
}

pub const PAPER_LAMBDA_GRID: [f64; 6] = [0.0075, 0.01, 0.02, 0.03, 0.15, 1.0];
pub const PAPER_OMEGA_GRID: [f64; 6] = [0.16, 0.17, 0.18, 0.19, 0.20, 0.25];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub lambda: f64,
    pub omega: f64,
    /// `None` when some training fold produced a null equation or the
    /// selected model could not be integrated
    pub val_mse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SindyCv {
    pub lambda: f64,
    pub omega: f64,
    pub table: Vec<CvCell>,
}

/// Contiguous blocks `0..n` split into `folds` parts, earlier blocks larger.
pub fn contiguous_folds(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Relative margin within which validation errors count as tied.
pub const CV_TIE_TOLERANCE: f64 = 1e-3;

/// Grid search over `(lambda, omega)` by validation error of the integrated
/// model on temporally contiguous folds.
pub fn cv_sindy(
    traj: &Trajectory,
    lambda_grid: &[f64],
    omega_grid: &[f64],
    folds: usize,
    scheme: DerivativeScheme,
) -> Result<SindyCv> {
    if lambda_grid.is_empty() || omega_grid.is_empty() {
        return Err(Error::EmptyInput("hyperparameter grid"));
    }
    if folds < 2 || folds > traj.len() {
        return Err(Error::InvalidArgument(format!("{folds} folds for {} points", traj.len())));
    }
    let data = sindy_dataset(traj, scheme)?;
    let blocks = contiguous_folds(traj.len(), folds);
    let mut table = Vec::new();
    for &lambda in lambda_grid {
        for &omega in omega_grid {
            table.push(CvCell {
                lambda,
                omega,
                val_mse: cv_cell(traj, &data, &blocks, lambda, omega)?,
            });
        }
    }
    let best = table
        .iter()
        .filter_map(|c| c.val_mse)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::AllDisqualified);
    }
    let chosen = table
        .iter()
        .filter(|c| c.val_mse.is_some_and(|m| m <= best + CV_TIE_TOLERANCE * best.abs()))
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.omega.total_cmp(&b.omega)))
        .expect("the best cell qualifies");
    Ok(SindyCv {
        lambda: chosen.lambda,
        omega: chosen.omega,
        table,
    })
}

fn cv_cell(
    traj: &Trajectory,
    data: &Dataset,
    blocks: &[std::ops::Range<usize>],
    lambda: f64,
    omega: f64,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for block in blocks {
        let train: Vec<usize> = (0..traj.len()).filter(|i| !block.contains(i)).collect();
        let fit = sindy_fit(&data.select_rows(&train), lambda, omega)?.fit;
        if fit.any_null() {
            return Ok(None);
        }
        let times = &traj.times[block.clone()];
        let u0 = &traj.states[block.start];
        let sim = if times.len() == 1 {
            Trajectory::new(times.to_vec(), vec![u0.clone()])
        } else {
            simulate_model(&fit.coefficients, u0, times)
        };
        let sim = match sim {
            Ok(s) => s,
            Err(Error::NonFinite(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let sq: f64 = sim
            .states
            .iter()
            .zip(&traj.states[block.clone()])
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum();
        total += sq / block.len() as f64;
    }
    Ok(Some(total / blocks.len() as f64))
}

impl SindyCv {
    /// Rows by lambda, columns by omega, `-` for disqualified cells.
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut lambdas: Vec<f64> = Vec::new();
        let mut omegas: Vec<f64> = Vec::new();
        for c in &self.table {
            if !lambdas.contains(&c.lambda) {
                lambdas.push(c.lambda);
            }
            if !omegas.contains(&c.omega) {
                omegas.push(c.omega);
            }
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["lambda\\omega".to_string()];
        header.extend(omegas.iter().map(f64::to_string));
        w.write_record(&header)?;
        for &l in &lambdas {
            let mut row = vec![l.to_string()];
            for &o in &omegas {
                let cell = self.table.iter().find(|c| c.lambda == l && c.omega == o);
                row.push(match cell.and_then(|c| c.val_mse) {
                    Some(m) => format!("{m:.6}"),
                    None => "-".to_string(),
                });
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}
