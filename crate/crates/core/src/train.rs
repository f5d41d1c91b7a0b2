//! Mini-batch training of a [`ForecastModel`] on normalized windows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::model::{ForecastModel, LossConfig};
use crate::numeric::{clip_global_norm, OptimizerState};
use crate::params::Parameterized;
use crate::scalar::Real;

/// Windows handled by one worker before its partial gradient is folded in.
/// Fixed so the summation order, and therefore the result, never depends
/// on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ar: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub loss_threshold: f64,
    /// λ, the weight of the gap term.
    pub gap_weight: f64,
    pub clip_norm: f64,
    /// Anneal the learning rate along a half cosine, epoch by epoch.
    pub cosine_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ar: 10,
            hidden: 64,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            shuffle: true,
            loss_threshold: 1.0,
            gap_weight: 1.0,
            clip_norm: 5.0,
            cosine_decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.to_string()));
        if self.ar == 0 {
            return bad("ar must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.loss_threshold > 0.0 && self.loss_threshold.is_finite()) {
            return bad("loss_threshold must be positive");
        }
        if !(self.gap_weight >= 0.0 && self.gap_weight.is_finite()) {
            return bad("gap_weight must be non-negative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn loss<T: Real>(&self) -> LossConfig<T> {
        LossConfig {
            threshold: T::of(self.loss_threshold),
            gap_weight: T::of(self.gap_weight),
        }
    }

    /// `key=value` lines, one per field.
    pub fn to_report(&self) -> String {
        format!(
            "ar={}\nhidden={}\nepochs={}\nbatch_size={}\nlearning_rate={}\nseed={}\nshuffle={}\nloss_threshold={}\ngap_weight={}\nclip_norm={}\ncosine_decay={}\n",
            self.ar,
            self.hidden,
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.seed,
            self.shuffle,
            self.loss_threshold,
            self.gap_weight,
            self.clip_norm,
            self.cosine_decay
        )
    }
}

/// Summed loss and gradient over `batch`.
fn batch_gradient<T: Real>(
    model: &ForecastModel<T>,
    windows: &WindowSet<T>,
    batch: &[usize],
    loss: &LossConfig<T>,
) -> Result<(T, ForecastModel<T>)> {
    let partials: Vec<Result<(T, ForecastModel<T>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zeros_like();
            let mut total = T::zero();
            for &k in chunk {
                total = total
                    + model.loss_and_grad_acc(
                        &windows.inputs[k],
                        windows.target_values.row(k),
                        windows.target_gaps.row(k),
                        windows.target_masks.row(k),
                        loss,
                        &mut grads,
                    )?;
            }
            Ok((total, grads))
        })
        .collect();
    let mut grads = model.zeros_like();
    let mut total = T::zero();
    for partial in partials {
        let (l, g) = partial?;
        total = total + l;
        grads.accumulate(&g);
    }
    Ok((total, grads))
}

/// Adam on the masked loss, averaged per mini-batch, with global-norm
/// clipping. Returns the trained model and the mean per-window loss of
/// every epoch (measured while the epoch trains).
pub fn train<T: Real>(
    model: &ForecastModel<T>,
    windows: &WindowSet<T>,
    cfg: &TrainConfig,
) -> Result<(ForecastModel<T>, Vec<f64>)> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    match &windows.normalization {
        Some(stats) if *stats == model.normalization => {}
        _ => {
            return Err(Error::invalid(
                "training windows must be normalized with the model's statistics",
            ))
        }
    }
    let finite = |m: &crate::numeric::Matrix<T>| m.is_finite();
    if !(windows.inputs.iter().all(finite)
        && finite(&windows.target_values)
        && finite(&windows.target_gaps)
        && finite(&windows.target_masks))
    {
        return Err(Error::invalid("training windows contain non-finite entries"));
    }
    let mut model = model.clone();
    let loss = cfg.loss::<T>();
    let mut opt = OptimizerState::adam(T::of(cfg.learning_rate), &model.shapes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.cosine_decay {
            let progress = epoch as f64 / cfg.epochs as f64;
            opt.learning_rate = T::of(cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        }
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let step = opt.steps_taken() + 1;
            // inputs are finite, so a failing loss means the outputs blew up
            let (total, mut grads) = batch_gradient(&model, windows, batch, &loss).map_err(|e| match e {
                Error::InvalidInput(_) => Error::Diverged { step },
                other => other,
            })?;
            if !total.is_finite() {
                return Err(Error::Diverged { step });
            }
            epoch_total += total.as_f64();
            grads.scale(T::one() / T::of(batch.len() as f64));
            clip_global_norm(&mut grads.arrays_mut(), T::of(cfg.clip_norm));
            let g = grads.arrays();
            opt.step(&mut model.arrays_mut(), &g)?;
        }
        history.push(epoch_total / windows.len() as f64);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, Normalization, SineStream, SporadicSeries};
    use crate::model::Variant;

    fn fixture() -> (ForecastModel<f64>, WindowSet<f64>) {
        let stream = SineStream {
            steps: 80,
            ..SineStream::default()
        };
        let series = SporadicSeries::from_events(&stream.events::<f64>(), 2).unwrap();
        let raw = make_windows(&series.forward_impute(&[0.0, 0.0]).unwrap(), 4).unwrap();
        let stats = Normalization::fit(&raw).unwrap();
        let windows = raw.normalized(&stats).unwrap();
        (ForecastModel::new(Variant::Simple, 2, 6, stats, 1).unwrap(), windows)
    }

    fn small() -> TrainConfig {
        TrainConfig {
            ar: 4,
            hidden: 6,
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_leave_the_model_alone() {
        let (model, windows) = fixture();
        let (trained, history) = train(&model, &windows, &TrainConfig { epochs: 0, ..small() }).unwrap();
        assert_eq!(trained, model);
        assert!(history.is_empty());
    }

    #[test]
    fn same_seed_same_history() {
        let (model, windows) = fixture();
        let (a, ha) = train(&model, &windows, &small()).unwrap();
        let (b, hb) = train(&model, &windows, &small()).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
        assert_eq!(ha.len(), 5);
        assert!(ha.last().unwrap() < ha.first().unwrap());
    }

    #[test]
    fn rejects_mismatched_normalization_and_bad_config() {
        let (model, windows) = fixture();
        assert!(train(&model, &windows.denormalized(), &small()).is_err());
        assert!(train(&model, &windows, &TrainConfig { batch_size: 0, ..small() }).is_err());
        assert!(train(&model, &windows, &TrainConfig { learning_rate: -1.0, ..small() }).is_err());
    }

    #[test]
    fn blown_up_outputs_report_the_step() {
        let (mut model, mut windows) = fixture();
        model.value_head.as_mut().unwrap().weights[(0, 0)] = f64::INFINITY;
        let cfg = TrainConfig { shuffle: false, ..small() };
        assert!(matches!(train(&model, &windows, &cfg), Err(Error::Diverged { step: 1 })));

        windows.target_values[(3, 0)] = f64::NAN;
        let (model, _) = fixture();
        assert!(matches!(train(&model, &windows, &cfg), Err(Error::InvalidInput(_))));
    }
}
