use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Event;
use crate::scalar::Real;

/// Multi-sensor sine stream with random reporting gaps and missingness.
#[derive(Debug, Clone)]
pub struct SineStream {
    pub steps: usize,
    pub sensors: usize,
    /// Probability that a given sensor does not report at a timestep.
    pub missing: f64,
    /// Seconds between consecutive timesteps are uniform in `1..=max_step`.
    pub max_step: u32,
    pub period: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub seed: u64,
}

impl Default for SineStream {
    fn default() -> Self {
        Self {
            steps: 500,
            sensors: 2,
            missing: 0.4,
            max_step: 3,
            period: 120.0,
            amplitude: 1.0,
            offset: 0.0,
            seed: 0,
        }
    }
}

impl SineStream {
    /// Noise-free reading of `sensor` at `time` seconds.
    pub fn truth(&self, sensor: usize, time: f64) -> f64 {
        let phase = sensor as f64 * std::f64::consts::PI / 3.0;
        self.offset + self.amplitude * (std::f64::consts::TAU * time / self.period + phase).sin()
    }

    /// Events sorted by time. Every timestep has at least one report.
    pub fn events<T: Real>(&self) -> Vec<Event<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut events = Vec::new();
        let mut time = 0u64;
        for step in 0..self.steps {
            if step > 0 {
                time += u64::from(rng.gen_range(1..=self.max_step.max(1)));
            }
            let mut reported: Vec<usize> =
                (0..self.sensors).filter(|_| !rng.gen_bool(self.missing)).collect();
            if reported.is_empty() {
                reported.push(rng.gen_range(0..self.sensors));
            }
            for d in reported {
                let t = time as f64;
                events.push(Event::new(T::of(t), d, T::of(self.truth(d, t))));
            }
        }
        events
    }
}
