//! Gated recurrent unit with hand-derived backward pass.
//!
//! ```text
//! r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
//! z_t = σ(W_z x_t + U_z h_{t-1} + b_z)
//! h̃_t = tanh(W x_t + U (r_t ∘ h_{t-1}) + b)
//! h_t = (1 − z_t) ∘ h_{t-1} + z_t ∘ h̃_t
//! ```

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::params::Parameterized;
use crate::scalar::{sigmoid, Real};

/// The nine GRU parameter arrays. The same struct doubles as the gradient
/// buffer for a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<T> {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_r: Matrix<T>,
    pub w_z: Matrix<T>,
    pub w: Matrix<T>,
    pub u_r: Matrix<T>,
    pub u_z: Matrix<T>,
    pub u: Matrix<T>,
    pub b_r: Vec<T>,
    pub b_z: Vec<T>,
    pub b: Vec<T>,
}

pub type GruGrads<T> = GruParams<T>;

/// Intermediates of one forward step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStepCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub r: Vec<T>,
    pub z: Vec<T>,
    pub h_tilde: Vec<T>,
    pub h: Vec<T>,
}

/// Uniform fan-based initialization bound `√(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn uniform_matrix<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<T> {
    let limit = glorot_limit(cols, rows);
    let dist = Uniform::new_inclusive(-limit, limit);
    let data = (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect();
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}

impl<T: Real> GruParams<T> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w_r: Matrix::zeros(hidden_dim, input_dim),
            w_z: Matrix::zeros(hidden_dim, input_dim),
            w: Matrix::zeros(hidden_dim, input_dim),
            u_r: Matrix::zeros(hidden_dim, hidden_dim),
            u_z: Matrix::zeros(hidden_dim, hidden_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b_r: vec![T::zero(); hidden_dim],
            b_z: vec![T::zero(); hidden_dim],
            b: vec![T::zero(); hidden_dim],
        }
    }

    /// Weights uniform in ±√(6/(fan_in+fan_out)) per matrix, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(input_dim, hidden_dim, &mut rng)
    }

    pub(crate) fn init_with(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "GRU dims must be positive, got input {input_dim}, hidden {hidden_dim}"
            )));
        }
        let mut p = Self::zeros(input_dim, hidden_dim);
        p.w_r = uniform_matrix(hidden_dim, input_dim, rng);
        p.w_z = uniform_matrix(hidden_dim, input_dim, rng);
        p.w = uniform_matrix(hidden_dim, input_dim, rng);
        p.u_r = uniform_matrix(hidden_dim, hidden_dim, rng);
        p.u_z = uniform_matrix(hidden_dim, hidden_dim, rng);
        p.u = uniform_matrix(hidden_dim, hidden_dim, rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim)
    }

    fn check_dims(&self, x: &[T], h_prev: &[T]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "GRU input has length {}, expected {}",
                x.len(),
                self.input_dim
            )));
        }
        if h_prev.len() != self.hidden_dim {
            return Err(Error::invalid(format!(
                "GRU hidden state has length {}, expected {}",
                h_prev.len(),
                self.hidden_dim
            )));
        }
        Ok(())
    }

    /// One recurrence step.
    pub fn forward(&self, x: &[T], h_prev: &[T]) -> Result<(Vec<T>, GruStepCache<T>)> {
        self.check_dims(x, h_prev)?;

        let mut r = self.b_r.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut z = self.b_z.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let gated: Vec<T> = r.iter().zip(h_prev).map(|(&a, &b)| a * b).collect();
        let mut h_tilde = self.b.clone();
        self.w.matvec_acc(x, &mut h_tilde);
        self.u.matvec_acc(&gated, &mut h_tilde);
        h_tilde.iter_mut().for_each(|v| *v = v.tanh());

        let h: Vec<T> = (0..self.hidden_dim)
            .map(|j| (T::one() - z[j]) * h_prev[j] + z[j] * h_tilde[j])
            .collect();

        let cache = GruStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            r,
            z,
            h_tilde,
            h: h.clone(),
        };
        Ok((h, cache))
    }

    /// Backward through one step. Parameter gradients are added into
    /// `grads`; returns `(dL/dx, dL/dh_prev)`.
    pub fn backward_acc(&self, cache: &GruStepCache<T>, dh: &[T], grads: &mut GruGrads<T>) -> (Vec<T>, Vec<T>) {
        let n = self.hidden_dim;
        let one = T::one();
        let mut dh_prev = vec![T::zero(); n];
        let mut da_z = vec![T::zero(); n];
        let mut da_h = vec![T::zero(); n];
        for j in 0..n {
            let z = cache.z[j];
            let ht = cache.h_tilde[j];
            dh_prev[j] = dh[j] * (one - z);
            da_z[j] = dh[j] * (ht - cache.h_prev[j]) * z * (one - z);
            da_h[j] = dh[j] * z * (one - ht * ht);
        }

        let gated: Vec<T> = cache.r.iter().zip(&cache.h_prev).map(|(&a, &b)| a * b).collect();
        grads.w.add_outer(&da_h, &cache.x);
        grads.u.add_outer(&da_h, &gated);
        crate::numeric::add_assign(&mut grads.b, &da_h);

        let mut d_gated = vec![T::zero(); n];
        self.u.matvec_t_acc(&da_h, &mut d_gated);
        let mut da_r = vec![T::zero(); n];
        for j in 0..n {
            let r = cache.r[j];
            dh_prev[j] = dh_prev[j] + d_gated[j] * r;
            da_r[j] = d_gated[j] * cache.h_prev[j] * r * (one - r);
        }

        grads.w_r.add_outer(&da_r, &cache.x);
        grads.u_r.add_outer(&da_r, &cache.h_prev);
        crate::numeric::add_assign(&mut grads.b_r, &da_r);
        grads.w_z.add_outer(&da_z, &cache.x);
        grads.u_z.add_outer(&da_z, &cache.h_prev);
        crate::numeric::add_assign(&mut grads.b_z, &da_z);

        let mut dx = vec![T::zero(); self.input_dim];
        self.w_r.matvec_t_acc(&da_r, &mut dx);
        self.w_z.matvec_t_acc(&da_z, &mut dx);
        self.w.matvec_t_acc(&da_h, &mut dx);

        self.u_r.matvec_t_acc(&da_r, &mut dh_prev);
        self.u_z.matvec_t_acc(&da_z, &mut dh_prev);

        (dx, dh_prev)
    }

    /// Backward through one step into fresh gradient buffers.
    pub fn backward(&self, cache: &GruStepCache<T>, dh: &[T]) -> (Vec<T>, Vec<T>, GruGrads<T>) {
        let mut grads = self.zeros_like();
        let (dx, dh_prev) = self.backward_acc(cache, dh, &mut grads);
        (dx, dh_prev, grads)
    }

    /// Folds [`GruParams::forward`] over the rows of `window` in time order.
    /// `h0 = None` starts from the zero state.
    pub fn sequence_forward(&self, window: &Matrix<T>, h0: Option<&[T]>) -> Result<(Vec<T>, Vec<GruStepCache<T>>)> {
        if window.cols() != self.input_dim {
            return Err(Error::invalid(format!(
                "window has {} columns, GRU expects {}",
                window.cols(),
                self.input_dim
            )));
        }
        let mut h = match h0 {
            Some(h0) => h0.to_vec(),
            None => vec![T::zero(); self.hidden_dim],
        };
        let mut caches = Vec::with_capacity(window.rows());
        for row in window.iter_rows() {
            let (next, cache) = self.forward(row, &h)?;
            caches.push(cache);
            h = next;
        }
        Ok((h, caches))
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state. Returns `(dL/dwindow, dL/dh0)`.
    pub fn sequence_backward_acc(
        &self,
        caches: &[GruStepCache<T>],
        dh_last: &[T],
        grads: &mut GruGrads<T>,
    ) -> (Matrix<T>, Vec<T>) {
        let mut dwindow = Matrix::zeros(caches.len(), self.input_dim);
        let mut dh = dh_last.to_vec();
        for (t, cache) in caches.iter().enumerate().rev() {
            let (dx, dh_prev) = self.backward_acc(cache, &dh, grads);
            dwindow.row_mut(t).copy_from_slice(&dx);
            dh = dh_prev;
        }
        (dwindow, dh)
    }
}

impl<T: Real> Parameterized<T> for GruParams<T> {
    fn arrays(&self) -> Vec<&[T]> {
        vec![
            self.w_r.as_slice(),
            self.w_z.as_slice(),
            self.w.as_slice(),
            self.u_r.as_slice(),
            self.u_z.as_slice(),
            self.u.as_slice(),
            &self.b_r,
            &self.b_z,
            &self.b,
        ]
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.w_r.as_mut_slice(),
            self.w_z.as_mut_slice(),
            self.w.as_mut_slice(),
            self.u_r.as_mut_slice(),
            self.u_z.as_mut_slice(),
            self.u.as_mut_slice(),
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = GruParams::<f64>::init(12, 8, 7).unwrap();
        let b = GruParams::<f64>::init(12, 8, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.b_r.iter().chain(&a.b_z).chain(&a.b).all(|&v| v == 0.0));
        let limit = (6.0f64 / 20.0).sqrt();
        for m in [&a.w_r, &a.w_z, &a.w] {
            assert!(m.as_slice().iter().all(|v| v.abs() <= limit));
        }
        let hidden_limit = (6.0f64 / 16.0).sqrt();
        for m in [&a.u_r, &a.u_z, &a.u] {
            assert!(m.as_slice().iter().all(|v| v.abs() <= hidden_limit));
        }
        assert_ne!(a, GruParams::<f64>::init(12, 8, 8).unwrap());
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(GruParams::<f64>::init(0, 4, 1).is_err());
        assert!(GruParams::<f64>::init(4, 0, 1).is_err());
    }

    #[test]
    fn zero_params_halve_the_state() {
        let p = GruParams::<f64>::zeros(3, 2);
        let (h, cache) = p.forward(&[1.0, -2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(cache.z, vec![0.5, 0.5]);

        let (h, _) = p.forward(&[1.0, -2.0, 3.0], &[0.8, -0.4]).unwrap();
        assert_eq!(h, vec![0.4, -0.2]);

        let window = Matrix::filled(3, 3, 1.0);
        let (h3, caches) = p.sequence_forward(&window, Some(&[0.8, -0.4])).unwrap();
        assert_eq!(caches.len(), 3);
        assert_eq!(h3, vec![0.1, -0.05]);
    }

    #[test]
    fn zero_params_backward_halves_gradient() {
        let p = GruParams::<f64>::zeros(2, 3);
        let (_, cache) = p.forward(&[0.3, 0.1], &[0.2, -0.5, 0.9]).unwrap();
        let (dx, dh_prev, _) = p.backward(&cache, &[1.0, -2.0, 4.0]);
        assert_eq!(dh_prev, vec![0.5, -1.0, 2.0]);
        assert_eq!(dx, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = GruParams::<f64>::init(3, 4, 11).unwrap();
        let (_, cache) = p.forward(&[0.3, 0.1, -0.7], &[0.2, -0.5, 0.9, 0.0]).unwrap();
        let (dx, dh_prev, grads) = p.backward(&cache, &[0.0; 4]);
        assert!(dx.iter().chain(&dh_prev).all(|&v| v == 0.0));
        assert!(grads.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = GruParams::<f64>::zeros(3, 2);
        assert!(p.forward(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(p.forward(&[1.0, 2.0, 3.0], &[0.0]).is_err());
        assert!(p.sequence_forward(&Matrix::zeros(2, 4), None).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = GruParams::<f32>::init(2, 3, 5).unwrap();
        let (h, cache) = p.forward(&[0.5, -0.5], &[0.1, 0.2, 0.3]).unwrap();
        assert!(h.iter().all(|v| v.is_finite() && v.abs() < 1.0));
        assert!(cache.r.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
