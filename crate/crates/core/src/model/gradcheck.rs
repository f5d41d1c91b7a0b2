use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ForecastModel, LossConfig, Variant};
use crate::data::Normalization;
use crate::numeric::{finite_diff_gradcheck, GradCheck, Matrix};
use crate::params::Parameterized;

/// Central-difference step used by the gradient-check suite.
pub const GRADCHECK_EPSILON: f64 = 1e-4;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// A random model plus one random window and target row.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub model: ForecastModel<f64>,
    pub window: Matrix<f64>,
    pub target_values: Vec<f64>,
    pub target_gaps: Vec<f64>,
    pub mask: Vec<f64>,
}

impl GradCheckCase {
    pub fn random(variant: Variant, num_vars: usize, hidden: usize, ar: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = num_vars;
        let mut uniform = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<_>>();
        let normalization = Normalization {
            value_mean: uniform(d, 10.0, 30.0),
            value_scale: uniform(d, 0.5, 3.0),
            gap_mean: uniform(d, 20.0, 80.0),
            gap_scale: uniform(d, 5.0, 20.0),
        };
        let mut model =
            ForecastModel::new(variant, d, hidden, normalization, seed).expect("positive dims");
        let flat = uniform(model.num_params(), -0.8, 0.8);
        model.load_flat(&flat).expect("sized from the model");
        if variant == Variant::Velocity {
            // keep raw-unit rates on the scale of the value statistics
            for v in model.rate_head.as_mut().expect("velocity").weights.as_mut_slice() {
                *v *= 0.05;
            }
        }

        let mut window = Matrix::zeros(ar, 3 * d);
        for r in 0..ar {
            for k in 0..d {
                window[(r, k)] = rng.gen_range(-2.0..2.0);
                window[(r, d + k)] = if rng.gen_bool(0.6) { 1.0 } else { 0.0 };
                window[(r, 2 * d + k)] = rng.gen_range(-1.0..2.0);
            }
        }
        let target_values = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target_gaps = (0..d).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let mut mask: Vec<f64> = (0..d).map(|_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 }).collect();
        if mask.iter().all(|&m| m == 0.0) {
            mask[0] = 1.0;
        }
        Self {
            model,
            window,
            target_values,
            target_gaps,
            mask,
        }
    }

    /// Runs the finite-difference check over every model parameter.
    /// `flip_sign` negates the analytic gradient, which must make the
    /// check fail.
    pub fn check(&self, cfg: &LossConfig<f64>, epsilon: f64, flip_sign: bool) -> GradCheck<f64> {
        let mut probe = self.model.clone();
        finite_diff_gradcheck(
            |flat: &[f64]| {
                probe.load_flat(flat).expect("same layout");
                let (loss, grads) = probe
                    .model_loss(&self.window, &self.target_values, &self.target_gaps, &self.mask, cfg)
                    .expect("well-formed case");
                let mut g = grads.to_flat();
                if flip_sign {
                    g.iter_mut().for_each(|v| *v = -*v);
                }
                (loss, g)
            },
            &self.model.to_flat(),
            epsilon,
        )
    }
}

/// Worst relative error over `configs` random cases of one variant, with
/// `D ≤ max_vars`, `H ≤ max_hidden`, `AR ≤ max_ar`.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub variant: Variant,
    pub configs: usize,
    pub worst: f64,
    pub failures: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

pub fn run_suite(
    variant: Variant,
    configs: usize,
    (max_vars, max_hidden, max_ar): (usize, usize, usize),
    seed: u64,
    flip_sign: bool,
) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(variant.tag()) << 32));
    let cfg = LossConfig::default();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..configs {
        let d = rng.gen_range(1..=max_vars);
        let h = rng.gen_range(1..=max_hidden);
        let ar = rng.gen_range(1..=max_ar);
        let case = GradCheckCase::random(variant, d, h, ar, rng.gen());
        let result = case.check(&cfg, GRADCHECK_EPSILON, flip_sign);
        if !result.passes(GRADCHECK_TOLERANCE) {
            failures += 1;
        }
        worst = worst.max(result.max_relative_error);
    }
    SuiteResult {
        variant,
        configs,
        worst,
        failures,
    }
}
