//! Semi-parametric prediction of wildfire counts and burnt areas at missing
//! grid cells.
//!
//! Counts get a zero-inflated negative binomial fit, burnt-area proportions a
//! zero/empirical-bulk/generalized-Pareto-tail mixture, both on observations
//! pooled from a spatial neighbourhood of the target cell. Neighbourhood size
//! and tail level are tuned by nearest-neighbour cross-validation against a
//! threshold-weighted squared CDF error.
//!
//! The numerical core is generic over [`num::Real`] (`f32` or `f64`); the
//! data pipeline works in `f64`.

// `!(x > 0)` guards are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ba_model;
pub mod config;
pub mod count_model;
pub mod data;
pub mod dependence;
pub mod ecdf;
pub mod error;
pub mod geo;
pub mod neighborhoods;
pub mod num;
pub mod optim;
pub mod pipeline;
pub mod rules;
pub mod scoring;
pub mod synth;
pub mod tuning;

pub use ba_model::{fit_gpd, fit_mixture, BaMixture, GpdParams};
pub use config::RunConfig;
pub use count_model::{fit_zinb, CountModel, ZinbParams};
pub use data::{ingest, Dataset, Observation, PredictionTable, Variable};
pub use error::{Error, Result};
pub use neighborhoods::{neighborhood, Neighborhood, NeighborhoodSpec};
pub use pipeline::{
    model_options, predict, run_all, run_method, MethodOutput, ModelOptions, PredictParams,
};
pub use synth::{synth, SyntheticSpec};

pub type Zinb64 = ZinbParams<f64>;
pub type Zinb32 = ZinbParams<f32>;
pub type Gpd64 = GpdParams<f64>;
pub type Gpd32 = GpdParams<f32>;
pub type Mixture64 = BaMixture<f64>;
pub type Mixture32 = BaMixture<f32>;
pub type CountModel64 = CountModel<f64>;
pub type CountModel32 = CountModel<f32>;
