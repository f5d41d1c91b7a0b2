//! Forecasting both the next values and the next observation times of
//! sparse, irregularly sampled multivariate sensor series.
//!
//! The pipeline runs raw sensor logs through [`ingest`] into a
//! [`data::SporadicSeries`] (values, observation mask, per-variable gap
//! matrix), slices it into autoregressive [`data::WindowSet`]s, and trains
//! one of the GRU forecasters in [`model`] with a masked Huber objective.
//! [`eval`] turns a trained model into masked MAE reports, cut-off sweeps,
//! correlation matrices and trace files.
//!
//! All math is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the pipeline uses.

pub mod data;
pub mod error;
pub mod eval;
pub mod gru;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod scalar;
pub mod train;

mod params;

pub use error::{Error, Result};
pub use params::Parameterized;
pub use scalar::Real;

pub type RealMatrix = numeric::Matrix<f64>;
pub type GruParams = gru::GruParams<f64>;
pub type GruStepCache = gru::GruStepCache<f64>;
pub type SporadicSeries = data::SporadicSeries<f64>;
pub type WindowSet = data::WindowSet<f64>;
pub type Normalization = data::Normalization<f64>;
pub type OptimizerState = numeric::OptimizerState<f64>;
pub type ForecastModel = model::ForecastModel<f64>;
pub type Forecast = model::Forecast<f64>;
