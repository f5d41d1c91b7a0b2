use rand_chacha::ChaCha8Rng;

use crate::gru::uniform_matrix;
use crate::numeric::{add_assign, Matrix};
use crate::scalar::Real;

/// Affine read-out `y = W h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    pub(crate) fn init_with(outputs: usize, inputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weights: uniform_matrix(outputs, inputs, rng),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn forward(&self, h: &[T]) -> Vec<T> {
        let mut y = self.bias.clone();
        self.weights.matvec_acc(h, &mut y);
        y
    }

    /// Adds parameter gradients into `grads` and `Wᵀ dy` into `dh`.
    pub fn backward_acc(&self, h: &[T], dy: &[T], grads: &mut Self, dh: &mut [T]) {
        grads.weights.add_outer(dy, h);
        add_assign(&mut grads.bias, dy);
        self.weights.matvec_t_acc(dy, dh);
    }
}
