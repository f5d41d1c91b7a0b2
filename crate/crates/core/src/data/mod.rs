//! Mask / gap representation of irregularly sampled series and the
//! autoregressive windows built from it.

mod series;
mod synthetic;
mod window;

pub use series::{Event, SporadicSeries};
pub use synthetic::SineStream;
pub use window::{make_windows, Normalization, WindowSet};
