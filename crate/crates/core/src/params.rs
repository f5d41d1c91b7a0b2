use crate::error::{Error, Result};
use crate::scalar::Real;

/// Anything that owns a fixed, ordered list of learnable arrays.
///
/// The order of [`Parameterized::arrays`] is the canonical order used for
/// flattening, optimizer buffers, and checkpoints.
pub trait Parameterized<T: Real> {
    fn arrays(&self) -> Vec<&[T]>;

    fn arrays_mut(&mut self) -> Vec<&mut [T]>;

    fn shapes(&self) -> Vec<usize> {
        self.arrays().iter().map(|a| a.len()).collect()
    }

    fn num_params(&self) -> usize {
        self.arrays().iter().map(|a| a.len()).sum()
    }

    fn to_flat(&self) -> Vec<T> {
        self.arrays().into_iter().flatten().copied().collect()
    }

    fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for array in self.arrays_mut() {
            let n = array.len();
            array.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zero(&mut self) {
        for array in self.arrays_mut() {
            array.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// `self += other`, array by array.
    fn accumulate(&mut self, other: &Self) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            crate::numeric::add_assign(dst, src);
        }
    }

    fn scale(&mut self, factor: T) {
        for array in self.arrays_mut() {
            crate::numeric::scale_assign(array, factor);
        }
    }

    fn all_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}
