//! The three forecasters wired from GRU trunks and affine heads.

pub mod checkpoint;
mod dense;
mod forecaster;
pub mod gradcheck;

pub use checkpoint::{load_model, save_model};
pub use dense::Dense;
pub use forecaster::{Forecast, ForecastModel, LossConfig, Trace, Variant};
