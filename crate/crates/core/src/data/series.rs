use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::scalar::Real;

/// A single reading: variable `var` took `value` at `time` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event<T> {
    pub time: T,
    pub var: usize,
    pub value: T,
}

impl<T> Event<T> {
    pub fn new(time: T, var: usize, value: T) -> Self {
        Self { time, var, value }
    }
}

/// Irregularly sampled multivariate series aligned on the distinct
/// observation times.
///
/// `values` holds NaN at unobserved entries until the series is imputed.
/// `gaps[t][d]` is the time since variable `d` was last observed strictly
/// before step `t`:
///
/// ```text
/// Δ_1 = 0
/// Δ_t = s_t − s_{t−1} + (1 − m_{t−1}) · Δ_{t−1}
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct SporadicSeries<T> {
    pub timestamps: Vec<T>,
    pub values: Matrix<T>,
    pub mask: Matrix<T>,
    pub gaps: Matrix<T>,
}

impl<T: Real> SporadicSeries<T> {
    /// Builds mask and gap matrices from events sorted by time.
    ///
    /// Times are re-anchored so the first event sits at 0. Every distinct
    /// time becomes one timestep. A repeated (time, variable) pair keeps the
    /// last value.
    pub fn from_events(events: &[Event<T>], num_vars: usize) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InsufficientData("no events".into()));
        }
        if num_vars == 0 {
            return Err(Error::invalid("series needs at least one variable"));
        }
        for (i, e) in events.iter().enumerate() {
            if !e.time.is_finite() || !e.value.is_finite() {
                return Err(Error::invalid(format!("event {i} is not finite")));
            }
            if e.var >= num_vars {
                return Err(Error::invalid(format!(
                    "event {i} refers to variable {} of {num_vars}",
                    e.var
                )));
            }
            if i > 0 && e.time < events[i - 1].time {
                return Err(Error::invalid(format!("events unsorted at index {i}")));
            }
        }

        let origin = events[0].time;
        let mut timestamps: Vec<T> = Vec::new();
        let mut rows: Vec<Vec<Option<T>>> = Vec::new();
        for e in events {
            let t = e.time - origin;
            if timestamps.last() != Some(&t) {
                timestamps.push(t);
                rows.push(vec![None; num_vars]);
            }
            rows.last_mut().expect("pushed above")[e.var] = Some(e.value);
        }

        let n = timestamps.len();
        let mut values = Matrix::filled(n, num_vars, T::nan());
        let mut mask = Matrix::zeros(n, num_vars);
        for (t, row) in rows.iter().enumerate() {
            for (d, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    values[(t, d)] = *v;
                    mask[(t, d)] = T::one();
                }
            }
        }
        let gaps = gap_matrix(&timestamps, &mask);
        Ok(Self {
            timestamps,
            values,
            mask,
            gaps,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.values.cols()
    }

    pub fn observed(&self, t: usize, d: usize) -> bool {
        self.mask[(t, d)] == T::one()
    }

    /// Fraction of observed entries, `Σm / (N·D)`.
    pub fn observed_fraction(&self) -> f64 {
        let total = (self.len() * self.num_vars()).max(1) as f64;
        let seen: f64 = self.mask.as_slice().iter().map(|v| v.as_f64()).sum();
        seen / total
    }

    /// True once every value entry is defined.
    pub fn is_imputed(&self) -> bool {
        self.values.is_finite()
    }

    /// Mean of the observed values of each variable; `None` for a variable
    /// with no observations.
    pub fn observed_means(&self) -> Vec<Option<T>> {
        (0..self.num_vars())
            .map(|d| {
                let (sum, count) = (0..self.len())
                    .filter(|&t| self.observed(t, d))
                    .fold((T::zero(), 0usize), |(s, c), t| (s + self.values[(t, d)], c + 1));
                (count > 0).then(|| sum / T::of(count as f64))
            })
            .collect()
    }

    /// Fills each unobserved entry with the latest observed value of the same
    /// variable, or `fallback[d]` before its first observation. Observed
    /// entries are left alone.
    pub fn forward_impute(&self, fallback: &[T]) -> Result<Self> {
        if fallback.len() != self.num_vars() {
            return Err(Error::invalid(format!(
                "fallback has {} entries for {} variables",
                fallback.len(),
                self.num_vars()
            )));
        }
        let mut out = self.clone();
        for d in 0..self.num_vars() {
            let mut last = fallback[d];
            for t in 0..self.len() {
                if self.observed(t, d) {
                    last = self.values[(t, d)];
                } else {
                    out.values[(t, d)] = last;
                }
            }
        }
        Ok(out)
    }

    /// Replaces every unobserved entry with zero; the no-imputation baseline.
    pub fn zero_fill(&self) -> Self {
        let mut out = self.clone();
        for t in 0..self.len() {
            for d in 0..self.num_vars() {
                if !self.observed(t, d) {
                    out.values[(t, d)] = T::zero();
                }
            }
        }
        out
    }

    /// Observed readings as events, in timestep then variable order.
    pub fn events(&self) -> Vec<Event<T>> {
        let mut events = Vec::new();
        for t in 0..self.len() {
            for d in 0..self.num_vars() {
                if self.observed(t, d) {
                    events.push(Event::new(self.timestamps[t], d, self.values[(t, d)]));
                }
            }
        }
        events
    }

    /// Timesteps `range` as a standalone series, re-anchored at 0 with its
    /// gap matrix rebuilt from scratch.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InsufficientData(format!(
                "empty or out-of-bounds slice {range:?} of {} timesteps",
                self.len()
            )));
        }
        let events: Vec<_> = self
            .events()
            .into_iter()
            .filter(|e| {
                // timestamps are strictly increasing, so binary search is exact
                let t = self
                    .timestamps
                    .binary_search_by(|s| s.partial_cmp(&e.time).expect("finite"))
                    .expect("event time comes from this series");
                range.contains(&t)
            })
            .collect();
        Self::from_events(&events, self.num_vars())
    }
}

fn gap_matrix<T: Real>(timestamps: &[T], mask: &Matrix<T>) -> Matrix<T> {
    let (n, dims) = mask.shape();
    let mut gaps = Matrix::zeros(n, dims);
    for t in 1..n {
        let step = timestamps[t] - timestamps[t - 1];
        for d in 0..dims {
            let carry = (T::one() - mask[(t - 1, d)]) * gaps[(t - 1, d)];
            gaps[(t, d)] = step + carry;
        }
    }
    gaps
}
