//! Dense arithmetic, Huber losses, optimizers and the finite-difference
//! checker that every learnable module is validated against.

mod gradcheck;
mod loss;
mod matrix;
mod optim;

pub use gradcheck::{finite_diff_gradcheck, GradCheck};
pub use loss::{huber, huber_grad, masked_huber_loss, masked_huber_slices};
pub use matrix::{add_assign, dot, scale_assign, Matrix};
pub use optim::{clip_global_norm, OptimizerKind, OptimizerState};
