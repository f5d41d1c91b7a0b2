use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    GradientDescent,
    Adam,
}

/// Optimizer hyperparameters plus per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    /// `shapes` holds the length of each parameter array, in the order the
    /// arrays are later passed to [`OptimizerState::step`].
    pub fn new(kind: OptimizerKind, learning_rate: T, shapes: &[usize]) -> Result<Self> {
        if !(learning_rate > T::zero()) || !learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let zeros = || shapes.iter().map(|&n| vec![T::zero(); n]).collect::<Vec<_>>();
        let (first_moment, second_moment) = match kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::GradientDescent => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            kind,
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            step: 0,
            first_moment,
            second_moment,
        })
    }

    pub fn adam(learning_rate: T, shapes: &[usize]) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate, shapes)
    }

    pub fn gradient_descent(learning_rate: T, shapes: &[usize]) -> Result<Self> {
        Self::new(OptimizerKind::GradientDescent, learning_rate, shapes)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Applies one update. Parameters are left untouched when any gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        let next = self.step + 1;
        if params.len() != grads.len() {
            return Err(Error::invalid(format!(
                "{} parameter arrays but {} gradient arrays",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::invalid(format!(
                    "parameter array {i} has {} entries, gradient has {}",
                    p.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged { step: next });
            }
        }
        match self.kind {
            OptimizerKind::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, &gv) in p.iter_mut().zip(g.iter()) {
                        *pv = *pv - self.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.len() != params.len()
                    || self.first_moment.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
                {
                    return Err(Error::invalid("parameter shapes differ from optimizer buffers"));
                }
                let t = next as i32;
                let correction1 = T::one() - self.beta1.powi(t);
                let correction2 = T::one() - self.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for (((pv, &gv), mv), vv) in p.iter_mut().zip(g.iter()).zip(m).zip(v) {
                        *mv = self.beta1 * *mv + (T::one() - self.beta1) * gv;
                        *vv = self.beta2 * *vv + (T::one() - self.beta2) * gv * gv;
                        let m_hat = *mv / correction1;
                        let v_hat = *vv / correction2;
                        *pv = *pv - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        self.step = next;
        Ok(())
    }
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Real>(grads: &mut [&mut [T]], max_norm: T) -> T {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |acc, &v| acc + v * v)
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let factor = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v = *v * factor;
            }
        }
    }
    norm
}
