//! Synthetic conditional targets with known equivalence lines.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::flow::{Optimizer, TargetSource, TaskDraw, TrainConfig};
use crate::geometry::{LineBlocks, PathMode, VariantLine};
use crate::signal::{scaling_line, shifting_line, stft, StftConfig, Window};

/// A 2-D line through a random offset at a random angle.
///
/// `a = (cos φ, sin φ)`, `φ ~ U[0, π)`, `b ~ 2 · N(0, I)`. The offset `b` is
/// the data sample: one arbitrary point of its line. The condition identifies
/// the line, not the sample: `(cos 2φ, sin 2φ, c)` with `c = (I − P) b` the
/// point of the line closest to the origin. The angle enters through a
/// π-periodic encoding so that `φ` and `φ + π` (the same line) look alike.
#[derive(Debug, Clone, Copy, Default)]
pub struct Line2dTask;

impl Line2dTask {
    pub fn line(phi: f64, offset: [f64; 2]) -> VariantLine {
        VariantLine::new(vec![phi.cos(), phi.sin()], offset.to_vec()).expect("unit direction")
    }

    pub fn condition(phi: f64, offset: [f64; 2]) -> Vec<f64> {
        // c = (b · n) n with n the unit normal of the line
        let normal = [-phi.sin(), phi.cos()];
        let along = offset[0] * normal[0] + offset[1] * normal[1];
        vec![
            (2.0 * phi).cos(),
            (2.0 * phi).sin(),
            along * normal[0],
            along * normal[1],
        ]
    }
}

impl TargetSource for Line2dTask {
    fn name(&self) -> &str {
        "2d"
    }

    fn dim(&self) -> usize {
        2
    }

    fn cond_dim(&self) -> usize {
        4
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskDraw {
        let phi = rng.random_range(0.0..PI);
        let b0: f64 = rng.sample(StandardNormal);
        let b1: f64 = rng.sample(StandardNormal);
        let offset = [2.0 * b0, 2.0 * b1];
        TaskDraw {
            lines: LineBlocks::single(Self::line(phi, offset)),
            condition: Self::condition(phi, offset),
        }
    }
}

/// Small log-magnitude + phase patches cut from STFTs of random tones.
///
/// The flow vector is `[log_mag (frames·bins) | phase (frames·bins)]`; the
/// magnitude block uses the scaling line, the phase block the shifting line,
/// and the condition is the clean patch itself.
#[derive(Debug, Clone, Copy)]
pub struct SpectrogramPatchTask {
    pub config: StftConfig,
    pub frames: usize,
}

impl Default for SpectrogramPatchTask {
    fn default() -> Self {
        Self {
            config: StftConfig {
                n_fft: 16,
                hop: 4,
                window: Window::Hann,
            },
            frames: 4,
        }
    }
}

impl SpectrogramPatchTask {
    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn block_len(&self) -> usize {
        self.frames * self.bins()
    }

    fn signal_len(&self) -> usize {
        self.config.n_fft + (self.frames - 1) * self.config.hop
    }

    /// Two random sinusoids plus a little white noise.
    pub fn tone(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let parts: Vec<(f64, f64, f64)> = (0..2)
            .map(|_| {
                let freq = rng.random_range(0.05..0.45) * std::f64::consts::TAU;
                let amp = rng.random_range(0.2..1.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                (freq, amp, phase)
            })
            .collect();
        (0..self.signal_len())
            .map(|i| {
                let t = i as f64;
                let noise: f64 = rng.sample(StandardNormal);
                parts
                    .iter()
                    .map(|(f, a, p)| a * (f * t + p).sin())
                    .sum::<f64>()
                    + 0.01 * noise
            })
            .collect()
    }
}

impl TargetSource for SpectrogramPatchTask {
    fn name(&self) -> &str {
        "spec"
    }

    fn dim(&self) -> usize {
        2 * self.block_len()
    }

    fn cond_dim(&self) -> usize {
        2 * self.block_len()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskDraw {
        let signal = self.tone(rng);
        let spec = stft(&signal, &self.config).expect("valid synthetic signal");
        let spec = spec
            .patch(0, self.frames, self.bins())
            .expect("patch within spectrogram");
        let mag = scaling_line(&spec).expect("scaling line");
        let pha = shifting_line(&spec).expect("shifting line");
        let mut condition = spec.log_mag.clone();
        condition.extend_from_slice(&spec.phase);
        TaskDraw {
            lines: LineBlocks::new(vec![mag, pha]).expect("two blocks"),
            condition,
        }
    }
}

/// Either toy task, selected at runtime.
#[derive(Debug, Clone, Copy)]
pub enum ToyTask {
    Line2d(Line2dTask),
    SpectrogramPatch(SpectrogramPatchTask),
}

impl ToyTask {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "2d" => Some(task_2d_line()),
            "spec" => Some(task_spectrogram_patch()),
            _ => None,
        }
    }

    /// `λ` (or `σ_min`) used when none is given.
    pub fn default_lambda(&self) -> f64 {
        match self {
            ToyTask::Line2d(_) => 0.05,
            ToyTask::SpectrogramPatch(_) => 1e-4,
        }
    }

    /// Training settings tuned for this task's scale.
    pub fn train_config(&self, mode: PathMode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            lambda: self.default_lambda(),
            epochs: 500,
            steps_per_epoch: 20,
            batch_size: 64,
            learning_rate: 2e-3,
            lr_decay: 0.995,
            seed,
            optimizer: Optimizer::Adam,
        }
    }

    fn inner(&self) -> &dyn TargetSource {
        match self {
            ToyTask::Line2d(t) => t,
            ToyTask::SpectrogramPatch(t) => t,
        }
    }
}

impl TargetSource for ToyTask {
    fn name(&self) -> &str {
        self.inner().name()
    }

    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn cond_dim(&self) -> usize {
        self.inner().cond_dim()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskDraw {
        self.inner().draw(rng)
    }
}

pub fn task_2d_line() -> ToyTask {
    ToyTask::Line2d(Line2dTask)
}

pub fn task_spectrogram_patch() -> ToyTask {
    ToyTask::SpectrogramPatch(SpectrogramPatchTask::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::signal::kappa;
    use rand::SeedableRng;

    #[test]
    fn angle_zero_is_x_axis() {
        let l = Line2dTask::line(0.0, [0.0, 0.0]);
        assert_eq!(l.direction(), &[1.0, 0.0]);
    }

    #[test]
    fn line_draws_have_unit_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let task = task_2d_line();
        for _ in 0..100 {
            let d = task.draw(&mut rng);
            let line = &d.lines.lines()[0];
            assert!((norm(line.direction()) - 1.0).abs() < 1e-15);
            let m = line.target_mean().unwrap();
            assert!(line.distance_to(&m).unwrap() < 1e-14);
            assert_eq!(d.condition.len(), 4);
        }
    }

    #[test]
    fn patch_layout() {
        let task = task_spectrogram_patch();
        assert_eq!(task.dim(), 72);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = task.draw(&mut rng);
        assert_eq!(d.lines.ranges(), &[0..36, 36..72]);
        assert!(d.lines.lines()[0].direction().iter().all(|a| *a == 1.0));
        let k = kappa(16);
        let pha = d.lines.lines()[1].direction();
        for f in 0..4 {
            for b in 0..9 {
                assert_eq!(pha[f * 9 + b], -k[b]);
            }
        }
        assert_eq!(d.condition, d.lines.offset());
    }
}
