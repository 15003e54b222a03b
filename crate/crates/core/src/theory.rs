//! Worst-case instability of the bagged inflated argmax and its inverse.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::Universe;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    WithReplacement,
    WithoutReplacement,
}

impl Sampling {
    pub fn from_replace(replace: bool) -> Self {
        if replace {
            Sampling::WithReplacement
        } else {
            Sampling::WithoutReplacement
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    pub n: usize,
    pub bag_size: usize,
    pub bags: usize,
    pub universe: Universe,
    pub sampling: Sampling,
    pub include_monte_carlo_term: bool,
}

impl TheoremParams {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n = {} must be at least 2", self.n)));
        }
        if self.bag_size == 0 || self.bags == 0 {
            return Err(Error::InvalidArgument("bag size and bag count must be positive".into()));
        }
        if self.sampling == Sampling::WithoutReplacement && self.bag_size > self.n {
            return Err(Error::BagTooLarge {
                k: self.bag_size,
                n: self.n,
            });
        }
        Ok(())
    }

    /// Probability that a given sample lands in a bag.
    pub fn rho(&self) -> f64 {
        let n = self.n as f64;
        match self.sampling {
            Sampling::WithoutReplacement => self.bag_size as f64 / n,
            Sampling::WithReplacement => 1.0 - (1.0 - 1.0 / n).powi(self.bag_size as i32),
        }
    }

    /// `(1 - 1/|M+|) * (rho / ((n-1)(1-rho)) + 16e^2/B)`, i.e. `delta * eps^2`.
    fn numerator(&self) -> Result<f64> {
        self.validate()?;
        let rho = self.rho();
        if rho >= 1.0 {
            return Err(Error::RhoOverflow(rho));
        }
        let resampling = rho / ((self.n as f64 - 1.0) * (1.0 - rho));
        let monte_carlo = if self.include_monte_carlo_term {
            16.0 * E * E / self.bags as f64
        } else {
            0.0
        };
        Ok(self.universe.complement_factor() * (resampling + monte_carlo))
    }
}

pub fn theoretical_delta(epsilon: f64, params: &TheoremParams) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::BadEpsilon(epsilon));
    }
    Ok(params.numerator()? / (epsilon * epsilon))
}

/// The inflation at which the guarantee reaches instability `delta`.
pub fn solve_epsilon(delta: f64, params: &TheoremParams) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    Ok((params.numerator()? / delta).sqrt())
}
