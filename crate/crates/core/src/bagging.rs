//! Bagged and subbagged weighting around any base weighting algorithm.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelId;
use crate::theory::{Sampling, TheoremParams};
use crate::weights::{normalize, Universe, WeightVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagConfig {
    pub bag_size: usize,
    pub bags: usize,
    pub sampling: Sampling,
    pub master_seed: u64,
}

impl BagConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bag_size == 0 || self.bags == 0 {
            return Err(Error::Config("bag size and bag count must be positive".into()));
        }
        if self.sampling == Sampling::WithoutReplacement && self.bag_size > n {
            return Err(Error::BagTooLarge {
                k: self.bag_size,
                n,
            });
        }
        Ok(())
    }

    pub fn theorem_params(&self, n: usize, universe: Universe) -> TheoremParams {
        TheoremParams {
            n,
            bag_size: self.bag_size,
            bags: self.bags,
            universe,
            sampling: self.sampling,
            include_monte_carlo_term: true,
        }
    }
}

/// Row indices of bag `bag_index`, sorted. The stream depends only on the
/// master seed and the bag index.
pub fn draw_bag(n: usize, cfg: &BagConfig, bag_index: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyInput("dataset"));
    }
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(bag_index as u64);
    let mut rows = match cfg.sampling {
        Sampling::WithoutReplacement => sample(&mut rng, n, cfg.bag_size).into_vec(),
        Sampling::WithReplacement => (0..cfg.bag_size).map(|_| rng.random_range(0..n)).collect(),
    };
    rows.sort_unstable();
    Ok(rows)
}

/// A map from data to a weight vector over candidate models.
pub trait Weighting: Sync {
    fn weights(&self, data: &Dataset) -> Result<WeightVector>;
}

/// One-hot weighting around a selector returning a single model.
pub struct SimpleWeighting<F> {
    select: F,
    universe: Universe,
}

pub fn as_simple_weighting<F>(select: F, universe: Universe) -> SimpleWeighting<F>
where
    F: Fn(&Dataset) -> Result<ModelId> + Sync,
{
    SimpleWeighting { select, universe }
}

impl<F> Weighting for SimpleWeighting<F>
where
    F: Fn(&Dataset) -> Result<ModelId> + Sync,
{
    fn weights(&self, data: &Dataset) -> Result<WeightVector> {
        Ok(WeightVector::one_hot((self.select)(data)?, self.universe))
    }
}

pub struct Bagged<'a, A: ?Sized> {
    pub base: &'a A,
    pub config: BagConfig,
}

impl<A: Weighting + ?Sized> Weighting for Bagged<'_, A> {
    fn weights(&self, data: &Dataset) -> Result<WeightVector> {
        bagged_weights(self.base, data, &self.config)
    }
}

/// Mean of the base weights over `B` resampled bags.
pub fn bagged_weights<A: Weighting + ?Sized>(
    algo: &A,
    data: &Dataset,
    cfg: &BagConfig,
) -> Result<WeightVector> {
    if data.n() == 0 {
        return Err(Error::EmptyInput("dataset"));
    }
    cfg.validate(data.n())?;
    let per_bag: Vec<WeightVector> = (0..cfg.bags)
        .into_par_iter()
        .map(|b| {
            let rows = draw_bag(data.n(), cfg, b)?;
            algo.weights(&data.select_rows(&rows)).map_err(|e| Error::Bag {
                index: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let universe = per_bag[0].universe();
    let mut sums: BTreeMap<ModelId, f64> = BTreeMap::new();
    for w in &per_bag {
        for (m, x) in w.iter() {
            *sums.entry(m.clone()).or_insert(0.0) += x;
        }
    }
    normalize(sums, universe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn cfg(k: usize, b: usize, sampling: Sampling) -> BagConfig {
        BagConfig {
            bag_size: k,
            bags: b,
            sampling,
            master_seed: 42,
        }
    }

    fn rows(n: usize) -> Dataset {
        Dataset::new(DMatrix::from_fn(n, 1, |i, _| i as f64), None).unwrap()
    }

    #[test]
    fn full_subbag_is_a_permutation() {
        let bag = draw_bag(5, &cfg(5, 1, Sampling::WithoutReplacement), 0).unwrap();
        assert_eq!(bag, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_row_with_replacement() {
        let bag = draw_bag(1, &cfg(3, 1, Sampling::WithReplacement), 0).unwrap();
        assert_eq!(bag, vec![0, 0, 0]);
    }

    #[test]
    fn bags_are_reproducible_and_distinct() {
        let c = cfg(10, 5, Sampling::WithoutReplacement);
        assert_eq!(draw_bag(50, &c, 3).unwrap(), draw_bag(50, &c, 3).unwrap());
        assert_ne!(draw_bag(50, &c, 3).unwrap(), draw_bag(50, &c, 4).unwrap());
        let bag = draw_bag(50, &c, 1).unwrap();
        assert!(bag.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn subbag_larger_than_data() {
        assert!(matches!(
            draw_bag(3, &cfg(4, 1, Sampling::WithoutReplacement), 0),
            Err(Error::BagTooLarge { k: 4, n: 3 })
        ));
    }

    #[test]
    fn constant_base_gives_one_hot() {
        let m = ModelId::variables([1]);
        let base = as_simple_weighting(|_: &Dataset| Ok(ModelId::variables([1])), Universe::Infinite);
        let w = bagged_weights(&base, &rows(10), &cfg(5, 20, Sampling::WithReplacement)).unwrap();
        assert_eq!(w.weight(&m), 1.0);
        assert_eq!(w.support_len(), 1);
    }

    #[test]
    fn weights_are_bag_fractions() {
        // selects {0} when row 0 is in the bag, {1} otherwise
        let base = as_simple_weighting(
            |d: &Dataset| {
                let has_zero = d.x().column(0).iter().any(|&v| v == 0.0);
                Ok(ModelId::variables([usize::from(!has_zero)]))
            },
            Universe::Finite(4),
        );
        let c = cfg(3, 400, Sampling::WithoutReplacement);
        let w = bagged_weights(&base, &rows(6), &c).unwrap();
        let hits = (0..400)
            .filter(|&b| draw_bag(6, &c, b).unwrap().contains(&0))
            .count();
        assert_eq!(w.weight(&ModelId::variables([0])), hits as f64 / 400.0);
        assert!((w.weight(&ModelId::variables([0])) - 0.5).abs() < 0.1);
    }

    #[test]
    fn failing_bag_is_reported() {
        let base = as_simple_weighting(
            |d: &Dataset| {
                if d.x()[(0, 0)] == 0.0 {
                    Err(Error::SingularSystem)
                } else {
                    Ok(ModelId::variables([0]))
                }
            },
            Universe::Infinite,
        );
        let err = bagged_weights(&base, &rows(10), &cfg(5, 50, Sampling::WithoutReplacement)).unwrap_err();
        assert!(matches!(err, Error::Bag { .. }));
    }
}
