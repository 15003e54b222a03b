//! Base weighting algorithms: LASSO, ridge and STRidge, graphical LASSO.

use nalgebra::DVector;

mod glasso;
mod lasso;
mod ridge;

pub use glasso::{
    edges_of, glasso_fit, glasso_fit_with, glasso_kkt_residual, glasso_objective, glasso_selector,
    sample_covariance, GlassoOptions, PrecisionFit,
};
pub use lasso::{
    lasso_fit, lasso_fit_xy, lasso_kkt_residual, lasso_objective, lasso_selector, support_of,
    LASSO_MAX_SWEEPS, LASSO_TOLERANCE,
};
pub use ridge::{ridge_fit, stridge_fit, StridgeFit};

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
}
