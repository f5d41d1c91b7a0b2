use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dense;
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::gru::{GruParams, GruStepCache};
use crate::numeric::{masked_huber_slices, Matrix};
use crate::params::Parameterized;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Value head and gap head off one shared trunk.
    Simple,
    /// Gap predicted first, then fed to a second trunk that predicts values.
    BiLayer,
    /// Gap head plus a rate head; value = last value + rate × predicted gap.
    Velocity,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Simple, Variant::BiLayer, Variant::Velocity];

    pub fn tag(self) -> u8 {
        match self {
            Variant::Simple => 0,
            Variant::BiLayer => 1,
            Variant::Velocity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.tag() == tag)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Simple => "simple",
            Variant::BiLayer => "bilayer",
            Variant::Velocity => "velocity",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simple" | "gru-simple" => Ok(Variant::Simple),
            "bilayer" | "gru-bilayer" => Ok(Variant::BiLayer),
            "velocity" | "gru-velocity" => Ok(Variant::Velocity),
            other => Err(Error::InvalidConfig(format!("unknown model variant {other:?}"))),
        }
    }
}

/// One-step forecast in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast<T> {
    pub values: Vec<T>,
    /// Seconds until each variable's next report, clamped at zero.
    pub gaps: Vec<T>,
}

/// Loss settings shared by training and gradient checks.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig<T> {
    pub threshold: T,
    /// Weight of the gap term relative to the value term.
    pub gap_weight: T,
}

impl<T: Real> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            threshold: T::one(),
            gap_weight: T::one(),
        }
    }
}

/// GRU forecaster over `[x; m; Δ]` windows.
///
/// Parameters are stored for every variant in one struct; the optional
/// pieces are present exactly when the variant uses them. The struct also
/// serves as its own gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel<T> {
    pub variant: Variant,
    pub num_vars: usize,
    pub hidden: usize,
    pub seed: u64,
    pub trunk: GruParams<T>,
    /// BiLayer only: consumes window rows with the predicted gaps appended.
    pub second_trunk: Option<GruParams<T>>,
    /// Absent for the velocity variant.
    pub value_head: Option<Dense<T>>,
    pub delta_head: Dense<T>,
    /// Velocity only: rate of change in raw units per second.
    pub rate_head: Option<Dense<T>>,
    /// Statistics the model's inputs are standardized with.
    pub normalization: Normalization<T>,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    h: Vec<T>,
    caches: Vec<GruStepCache<T>>,
    second: Option<(Vec<T>, Vec<GruStepCache<T>>)>,
    rate: Vec<T>,
    gap_raw: Vec<T>,
    /// Normalized value prediction.
    pub values: Vec<T>,
    /// Normalized gap prediction.
    pub gaps: Vec<T>,
}

impl<T: Real> ForecastModel<T> {
    /// Fresh model with uniform fan-based weights and zero biases.
    pub fn new(variant: Variant, num_vars: usize, hidden: usize, normalization: Normalization<T>, seed: u64) -> Result<Self> {
        if num_vars == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "model dims must be positive, got {num_vars} variables and hidden {hidden}"
            )));
        }
        if normalization.num_vars() != num_vars {
            return Err(Error::InvalidConfig("normalization fitted for a different variable count".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = num_vars;
        let trunk = GruParams::init_with(3 * d, hidden, &mut rng)?;
        let second_trunk = match variant {
            Variant::BiLayer => Some(GruParams::init_with(4 * d, hidden, &mut rng)?),
            _ => None,
        };
        let value_head = match variant {
            Variant::Velocity => None,
            _ => Some(Dense::init_with(d, hidden, &mut rng)),
        };
        let delta_head = Dense::init_with(d, hidden, &mut rng);
        let rate_head = match variant {
            Variant::Velocity => Some(Dense::init_with(d, hidden, &mut rng)),
            _ => None,
        };
        Ok(Self {
            variant,
            num_vars,
            hidden,
            seed,
            trunk,
            second_trunk,
            value_head,
            delta_head,
            rate_head,
            normalization,
        })
    }

    /// Same layout with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.zero();
        out
    }

    /// Velocity model whose rate head is identically zero: it forecasts the
    /// last observed value of every variable.
    pub fn persistence(num_vars: usize, hidden: usize, normalization: Normalization<T>) -> Result<Self> {
        let mut m = Self::new(Variant::Velocity, num_vars, hidden, normalization, 0)?;
        m.zero();
        Ok(m)
    }

    pub fn input_width(&self) -> usize {
        3 * self.num_vars
    }

    fn check_window(&self, window: &Matrix<T>) -> Result<()> {
        if window.cols() != self.input_width() {
            return Err(Error::invalid(format!(
                "window has {} columns, model expects {}",
                window.cols(),
                self.input_width()
            )));
        }
        if window.rows() == 0 {
            return Err(Error::invalid("empty window"));
        }
        Ok(())
    }

    /// Raw-unit value channel of the window's final row.
    pub fn last_values(&self, window: &Matrix<T>) -> Vec<T> {
        let row = window.row(window.rows() - 1);
        self.normalization.denormalize_values(&row[..self.num_vars])
    }

    /// Forward pass in normalized units, keeping intermediates.
    pub fn trace(&self, window: &Matrix<T>) -> Result<Trace<T>> {
        self.check_window(window)?;
        let last = self.last_values(window);
        self.trace_with_last(window, &last)
    }

    fn trace_with_last(&self, window: &Matrix<T>, last_raw: &[T]) -> Result<Trace<T>> {
        let d = self.num_vars;
        let (h, caches) = self.trunk.sequence_forward(window, None)?;
        let gaps = self.delta_head.forward(&h);
        let mut trace = Trace {
            h,
            caches,
            second: None,
            rate: Vec::new(),
            gap_raw: Vec::new(),
            values: Vec::new(),
            gaps,
        };
        match self.variant {
            Variant::Simple => {
                trace.values = self.value_head().forward(&trace.h);
            }
            Variant::BiLayer => {
                let second = self.second_trunk.as_ref().expect("bilayer has a second trunk");
                let augmented = augment(window, &trace.gaps);
                let (h2, caches2) = second.sequence_forward(&augmented, None)?;
                trace.values = self.value_head().forward(&h2);
                trace.second = Some((h2, caches2));
            }
            Variant::Velocity => {
                if last_raw.len() != d {
                    return Err(Error::invalid("last observed values have the wrong length"));
                }
                let rate = self.rate_head.as_ref().expect("velocity has a rate head").forward(&trace.h);
                let gap_raw = self.normalization.denormalize_gaps(&trace.gaps);
                trace.values = (0..d)
                    .map(|k| self.normalization.normalize_value(k, last_raw[k] + rate[k] * gap_raw[k]))
                    .collect();
                trace.rate = rate;
                trace.gap_raw = gap_raw;
            }
        }
        Ok(trace)
    }

    fn value_head(&self) -> &Dense<T> {
        self.value_head.as_ref().expect("variant has a value head")
    }

    fn to_forecast(&self, trace: &Trace<T>) -> Forecast<T> {
        Forecast {
            values: self.normalization.denormalize_values(&trace.values),
            gaps: self
                .normalization
                .denormalize_gaps(&trace.gaps)
                .into_iter()
                .map(|g| g.max(T::zero()))
                .collect(),
        }
    }

    /// Raw-unit forecast for a normalized window. Dispatches on the variant;
    /// the velocity variant takes its last observed values from the window.
    pub fn forecast(&self, window: &Matrix<T>) -> Result<Forecast<T>> {
        Ok(self.to_forecast(&self.trace(window)?))
    }

    pub fn simple_forward(&self, window: &Matrix<T>) -> Result<Forecast<T>> {
        self.expect_variant(Variant::Simple)?;
        self.forecast(window)
    }

    pub fn bilayer_forward(&self, window: &Matrix<T>) -> Result<Forecast<T>> {
        self.expect_variant(Variant::BiLayer)?;
        self.forecast(window)
    }

    /// `values = last + rate ∘ gap`, evaluated in raw units.
    pub fn velocity_forward(&self, window: &Matrix<T>, last_raw: &[T]) -> Result<Forecast<T>> {
        self.expect_variant(Variant::Velocity)?;
        self.check_window(window)?;
        Ok(self.to_forecast(&self.trace_with_last(window, last_raw)?))
    }

    fn expect_variant(&self, v: Variant) -> Result<()> {
        if self.variant != v {
            return Err(Error::invalid(format!("model is {}, not {v}", self.variant)));
        }
        Ok(())
    }

    /// Masked Huber loss on values plus `gap_weight` times the same on gaps,
    /// both in normalized units and both masked by `mask`. Parameter
    /// gradients are added into `grads`.
    pub fn loss_and_grad_acc(
        &self,
        window: &Matrix<T>,
        target_values: &[T],
        target_gaps: &[T],
        mask: &[T],
        cfg: &LossConfig<T>,
        grads: &mut Self,
    ) -> Result<T> {
        let d = self.num_vars;
        if target_values.len() != d || target_gaps.len() != d || mask.len() != d {
            return Err(Error::invalid("target rows must have one entry per variable"));
        }
        let trace = self.trace(window)?;
        let mut dv = vec![T::zero(); d];
        let mut dg = vec![T::zero(); d];
        let value_loss = masked_huber_slices(&trace.values, target_values, mask, cfg.threshold, &mut dv)?;
        let gap_loss = masked_huber_slices(&trace.gaps, target_gaps, mask, cfg.threshold, &mut dg)?;
        dg.iter_mut().for_each(|g| *g = *g * cfg.gap_weight);
        self.backward_acc(&trace, &dv, &dg, grads);
        Ok(value_loss + cfg.gap_weight * gap_loss)
    }

    /// Loss and fresh gradient buffers for one window.
    pub fn model_loss(
        &self,
        window: &Matrix<T>,
        target_values: &[T],
        target_gaps: &[T],
        mask: &[T],
        cfg: &LossConfig<T>,
    ) -> Result<(T, Self)> {
        let mut grads = self.zeros_like();
        let loss = self.loss_and_grad_acc(window, target_values, target_gaps, mask, cfg, &mut grads)?;
        Ok((loss, grads))
    }

    /// Backward from gradients on the normalized value and gap outputs.
    pub fn backward_acc(&self, trace: &Trace<T>, dvalues: &[T], dgaps: &[T], grads: &mut Self) {
        let d = self.num_vars;
        let mut dh = vec![T::zero(); self.hidden];
        let mut dgaps = dgaps.to_vec();
        match self.variant {
            Variant::Simple => {
                self.value_head()
                    .backward_acc(&trace.h, dvalues, grads.value_head.as_mut().expect("same layout"), &mut dh);
            }
            Variant::BiLayer => {
                let (h2, caches2) = trace.second.as_ref().expect("bilayer trace");
                let second = self.second_trunk.as_ref().expect("bilayer");
                let mut dh2 = vec![T::zero(); self.hidden];
                self.value_head()
                    .backward_acc(h2, dvalues, grads.value_head.as_mut().expect("same layout"), &mut dh2);
                let (daug, _) =
                    second.sequence_backward_acc(caches2, &dh2, grads.second_trunk.as_mut().expect("same layout"));
                // predicted gaps were broadcast into every row
                for r in 0..daug.rows() {
                    let row = daug.row(r);
                    for k in 0..d {
                        dgaps[k] = dgaps[k] + row[3 * d + k];
                    }
                }
            }
            Variant::Velocity => {
                let mut drate = vec![T::zero(); d];
                for k in 0..d {
                    let dvalue_raw = dvalues[k] / self.normalization.value_scale[k];
                    drate[k] = dvalue_raw * trace.gap_raw[k];
                    dgaps[k] = dgaps[k] + dvalue_raw * trace.rate[k] * self.normalization.gap_scale[k];
                }
                self.rate_head.as_ref().expect("velocity").backward_acc(
                    &trace.h,
                    &drate,
                    grads.rate_head.as_mut().expect("same layout"),
                    &mut dh,
                );
            }
        }
        self.delta_head.backward_acc(&trace.h, &dgaps, &mut grads.delta_head, &mut dh);
        self.trunk.sequence_backward_acc(&trace.caches, &dh, &mut grads.trunk);
    }
}

/// Appends `extra` to every row of `window`.
fn augment<T: Real>(window: &Matrix<T>, extra: &[T]) -> Matrix<T> {
    let cols = window.cols() + extra.len();
    let mut out = Matrix::zeros(window.rows(), cols);
    for r in 0..window.rows() {
        let row = out.row_mut(r);
        row[..window.cols()].copy_from_slice(window.row(r));
        row[window.cols()..].copy_from_slice(extra);
    }
    out
}

impl<T: Real> Parameterized<T> for ForecastModel<T> {
    fn arrays(&self) -> Vec<&[T]> {
        let mut out = self.trunk.arrays();
        if let Some(second) = &self.second_trunk {
            out.extend(second.arrays());
        }
        if let Some(head) = &self.value_head {
            out.extend([head.weights.as_slice(), &head.bias[..]]);
        }
        out.extend([self.delta_head.weights.as_slice(), &self.delta_head.bias[..]]);
        if let Some(head) = &self.rate_head {
            out.extend([head.weights.as_slice(), &head.bias[..]]);
        }
        out
    }

    fn arrays_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.trunk.arrays_mut();
        if let Some(second) = &mut self.second_trunk {
            out.extend(second.arrays_mut());
        }
        if let Some(head) = &mut self.value_head {
            out.extend([head.weights.as_mut_slice(), &mut head.bias[..]]);
        }
        out.extend([self.delta_head.weights.as_mut_slice(), &mut self.delta_head.bias[..]]);
        if let Some(head) = &mut self.rate_head {
            out.extend([head.weights.as_mut_slice(), &mut head.bias[..]]);
        }
        out
    }
}
