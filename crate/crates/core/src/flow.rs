//! Conditional path sampling and the flow-matching regression objective.
//!
//! Each training example draws `x0 ~ N(0, I)` and `t ~ U[0, 1]`, builds the
//! conditional path to the target, and regresses the network output at
//! `(x_t, t)` onto the path velocity `u_t`. The loss is the squared error
//! averaged over coordinates and over the batch.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, param, Error, Result};
use crate::geometry::{path_point, LineBlocks, PathMode, PathParams};
use crate::net::{Adam, Gradients, Mlp};

/// One training triple drawn from a conditional path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x_t: Vec<f64>,
    pub u_t: Vec<f64>,
    pub t: f64,
    pub condition: Option<Vec<f64>>,
}

/// A conditional target: the per-block lines plus conditioning features.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDraw {
    pub lines: LineBlocks,
    pub condition: Vec<f64>,
}

/// A distribution over conditional targets.
pub trait TargetSource {
    fn name(&self) -> &str;

    /// Flow dimension `d`.
    fn dim(&self) -> usize;

    /// Width of the conditioning vector.
    fn cond_dim(&self) -> usize;

    fn draw(&self, rng: &mut ChaCha8Rng) -> TaskDraw;
}

/// Draws `x0 ~ N(0, I)` then `t ~ U[0, 1]` and builds the path sample.
pub fn draw_path_sample<R: Rng + ?Sized>(
    lines: &LineBlocks,
    params: &PathParams,
    rng: &mut R,
) -> Result<PathSample> {
    let x0: Vec<f64> = (0..lines.dim())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let t: f64 = rng.random();
    path_sample_at(lines, params, &x0, t)
}

/// The path sample for a given source point and time.
pub fn path_sample_at(
    lines: &LineBlocks,
    params: &PathParams,
    x0: &[f64],
    t: f64,
) -> Result<PathSample> {
    let (endpoint, velocity) = lines.endpoint_and_velocity(params, x0)?;
    let x_t = path_point(x0, &endpoint, t)?;
    Ok(PathSample {
        x_t,
        u_t: velocity,
        t,
        condition: None,
    })
}

/// Per-coordinate mean squared error `‖v − u‖² / d`.
pub fn cfm_loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    check_len("loss target", predicted.len(), target.len())?;
    if predicted.is_empty() {
        return Err(param("predicted", "must not be empty"));
    }
    let sq: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, u)| (p - u) * (p - u))
        .sum();
    Ok(sq / predicted.len() as f64)
}

/// Batch mean of [`cfm_loss`].
pub fn cfm_batch_loss(predicted: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    check_len("batch size", predicted.len(), target.len())?;
    if predicted.is_empty() {
        return Err(param("batch", "must not be empty"));
    }
    let mut total = 0.0;
    for (p, u) in predicted.iter().zip(target) {
        total += cfm_loss(p, u)?;
    }
    Ok(total / predicted.len() as f64)
}

/// Gradient of the batch loss w.r.t. one prediction: `2 (v − u) / (d · batch)`.
pub fn cfm_loss_grad(predicted: &[f64], target: &[f64], batch_size: usize) -> Vec<f64> {
    let norm = 2.0 / (predicted.len() * batch_size) as f64;
    predicted
        .iter()
        .zip(target)
        .map(|(p, u)| norm * (p - u))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Momentum-free gradient descent.
    Sgd,
    /// Bias-corrected Adam with betas (0.9, 0.99), no weight decay.
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: PathMode,
    /// `λ` in LP mode, `σ_min` in OT mode.
    pub lambda: f64,
    pub epochs: usize,
    /// Minibatches per epoch; targets are synthetic so an epoch is a fixed step count.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: PathMode::Lp,
            lambda: 1e-4,
            epochs: 100,
            steps_per_epoch: 20,
            batch_size: 16,
            learning_rate: 5e-4,
            lr_decay: 0.99,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn path_params(&self) -> Result<PathParams> {
        PathParams::new(self.mode, self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        self.path_params()?;
        if self.batch_size == 0 {
            return Err(param("batch_size", "must be positive"));
        }
        if self.steps_per_epoch == 0 {
            return Err(param("steps_per_epoch", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(param("learning_rate", "must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(param("lr_decay", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: Mlp,
    /// Mean minibatch loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainReport {
    /// `epoch,mean_loss`
    pub fn write_loss_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,mean_loss")?;
        for (i, l) in self.loss_curve.iter().enumerate() {
            writeln!(w, "{},{l:e}", i + 1)?;
        }
        Ok(())
    }
}

/// Minibatch training of `model` on fresh path samples from `task`.
///
/// Deterministic for a given `cfg.seed`: one RNG stream drives target draws,
/// `x0` and `t` in a fixed order.
pub fn train(mut model: Mlp, task: &dyn TargetSource, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_len("model output width", task.dim(), model.data_dim())?;
    check_len("model condition width", task.cond_dim(), model.cond_width())?;
    let params = cfg.path_params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model);
    let mut grads = Gradients::zeros_like(&model);
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;
    let batch = cfg.batch_size;
    let inv = 1.0 / (batch * task.dim()) as f64;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let iteration = epoch * cfg.steps_per_epoch + step;
            grads.zero();
            let mut batch_loss = 0.0;
            for _ in 0..batch {
                let draw = task.draw(&mut rng);
                let sample = draw_path_sample(&draw.lines, &params, &mut rng)?;
                let input = model.input_vector(&sample.x_t, sample.t, &draw.condition)?;
                model.forward_backward(&input, &mut grads, |out| {
                    let mut g = Vec::with_capacity(out.len());
                    for (o, u) in out.iter().zip(&sample.u_t) {
                        let r = o - u;
                        batch_loss += r * r * inv;
                        g.push(2.0 * r * inv);
                    }
                    g
                });
            }
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    param_norm: model.param_norm(),
                });
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut model, &grads, lr)?,
                Optimizer::Sgd => model.sgd_step(&grads, lr)?,
            }
            epoch_loss += batch_loss;
        }
        loss_curve.push(epoch_loss / cfg.steps_per_epoch as f64);
        lr *= cfg.lr_decay;
    }
    Ok(TrainReport { model, loss_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VariantLine;

    #[test]
    fn loss_cases() {
        assert_eq!(cfm_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cfm_loss(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let b = cfm_batch_loss(
            &[vec![0.0, 0.0], vec![2.0, 2.0]],
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(b, 2.0);
        assert!(matches!(
            cfm_loss(&[1.0], &[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let p = vec![0.3, -1.2, 0.7];
        let u = vec![1.0, 0.5, -0.4];
        let g = cfm_loss_grad(&p, &u, 1);
        let h = 1e-6;
        for i in 0..3 {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (cfm_loss(&hi, &u).unwrap() - cfm_loss(&lo, &u).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-8));
        }
    }

    #[test]
    fn forced_time_endpoints() {
        let line = VariantLine::new(vec![1.0, 1.0], vec![2.0, -1.0]).unwrap();
        let blocks = LineBlocks::single(line.clone());
        let params = PathParams::lp(0.1).unwrap();
        let x0 = [0.4, 1.3];
        assert_eq!(
            path_sample_at(&blocks, &params, &x0, 0.0).unwrap().x_t,
            x0.to_vec()
        );
        let s = path_sample_at(&blocks, &params, &x0, 1.0).unwrap();
        assert_eq!(s.x_t, line.sample_target(0.1, &x0).unwrap());
    }

    #[test]
    fn lp_mode_rejects_degenerate_line() {
        let blocks = LineBlocks::single(VariantLine::point(vec![1.0, 2.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = draw_path_sample(&blocks, &PathParams::lp(0.1).unwrap(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.lr_decay = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            lambda: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
