//! Stable model selection: bagged model weights, set-valued selection rules
//! and the experiments that measure their stability.

pub mod bagging;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod harness;
pub mod learners;
pub mod model;
pub mod rules;
pub mod simplex;
pub mod theory;
pub mod weights;

pub use bagging::{bagged_weights, draw_bag, BagConfig, Weighting};
pub use data::Dataset;
pub use error::{Error, Result};
pub use model::{ModelId, ModelKind, ModelShape, SelectionSet};
pub use rules::{Rule, Selection, SelectionFlags};
pub use weights::{normalize, Universe, WeightVector};
