use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::scalar::Real;

/// Piecewise Huber penalty: quadratic within `threshold`, linear beyond.
pub fn huber<T: Real>(residual: T, threshold: T) -> Result<T> {
    if !residual.is_finite() {
        return Err(Error::invalid(format!("non-finite residual {residual}")));
    }
    if !(threshold > T::zero()) {
        return Err(Error::invalid(format!("huber threshold must be positive, got {threshold}")));
    }
    Ok(huber_unchecked(residual, threshold))
}

pub(crate) fn huber_unchecked<T: Real>(r: T, threshold: T) -> T {
    let a = r.abs();
    if a <= threshold {
        T::half() * r * r
    } else {
        threshold * (a - T::half() * threshold)
    }
}

/// d huber / d residual
pub fn huber_grad<T: Real>(r: T, threshold: T) -> T {
    if r.abs() <= threshold {
        r
    } else {
        threshold * r.signum()
    }
}

/// Huber loss averaged over the entries whose mask is 1.
///
/// Returns the loss together with its gradient with respect to `pred`. The
/// gradient is exactly zero at masked-out entries, and neither output reads
/// the values stored there.
pub fn masked_huber_loss<T: Real>(
    pred: &Matrix<T>,
    target: &Matrix<T>,
    mask: &Matrix<T>,
    threshold: T,
) -> Result<(T, Matrix<T>)> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: pred {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let loss = masked_huber_slices(
        pred.as_slice(),
        target.as_slice(),
        mask.as_slice(),
        threshold,
        grad.as_mut_slice(),
    )?;
    Ok((loss, grad))
}

/// Slice form of [`masked_huber_loss`]; writes the gradient into `grad`.
pub fn masked_huber_slices<T: Real>(
    pred: &[T],
    target: &[T],
    mask: &[T],
    threshold: T,
    grad: &mut [T],
) -> Result<T> {
    if pred.len() != target.len() || pred.len() != mask.len() || pred.len() != grad.len() {
        return Err(Error::invalid("masked loss operands differ in length"));
    }
    if !(threshold > T::zero()) {
        return Err(Error::invalid("huber threshold must be positive"));
    }
    let mut count = 0usize;
    let mut total = T::zero();
    for (((&p, &t), &m), g) in pred.iter().zip(target).zip(mask).zip(grad.iter_mut()) {
        *g = T::zero();
        if m == T::zero() {
            continue;
        }
        if m != T::one() {
            return Err(Error::invalid(format!("mask entry {m} is not 0 or 1")));
        }
        let r = p - t;
        total = total + huber(r, threshold)?;
        *g = huber_grad(r, threshold);
        count += 1;
    }
    let denom = T::of(count.max(1) as f64);
    for g in grad.iter_mut() {
        *g = *g / denom;
    }
    Ok(total / denom)
}
