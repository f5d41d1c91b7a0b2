use crate::scalar::Real;

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheck<T> {
    pub max_relative_error: T,
    /// Flat index of the entry that produced the maximum.
    pub worst_index: usize,
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
}

impl<T: Real> GradCheck<T> {
    pub fn passes(&self, tolerance: T) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares the analytic gradient returned by `f` at `params` against
/// central differences `(f(p+ε) − f(p−ε)) / 2ε`, one entry at a time.
///
/// The relative error per entry is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_gradcheck<T, F>(mut f: F, params: &[T], epsilon: T) -> GradCheck<T>
where
    T: Real,
    F: FnMut(&[T]) -> (T, Vec<T>),
{
    let (_, analytic) = f(params);
    assert_eq!(analytic.len(), params.len(), "gradient length differs from parameter count");

    let mut probe = params.to_vec();
    let two_eps = epsilon + epsilon;
    let floor = T::of(1e-8);
    let mut numeric = Vec::with_capacity(params.len());
    let mut worst = (T::zero(), 0usize);
    for i in 0..params.len() {
        let original = probe[i];
        probe[i] = original + epsilon;
        let (plus, _) = f(&probe);
        probe[i] = original - epsilon;
        let (minus, _) = f(&probe);
        probe[i] = original;

        let n = (plus - minus) / two_eps;
        let a = analytic[i];
        let denom = a.abs().max(n.abs()).max(floor);
        let rel = (a - n).abs() / denom;
        if rel > worst.0 || rel.is_nan() {
            worst = (rel, i);
        }
        numeric.push(n);
    }
    GradCheck {
        max_relative_error: worst.0,
        worst_index: worst.1,
        analytic,
        numeric,
    }
}
