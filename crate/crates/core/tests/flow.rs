use lpcfm::flow::{cfm_batch_loss, cfm_loss_grad, TaskDraw};
use lpcfm::geometry::{lp_endpoint, lp_velocity, ZeroProjector};
use lpcfm::linalg::norm;
use lpcfm::{
    cfm_loss, draw_path_sample, task_2d_line, train, LineBlocks, Mlp, Optimizer, PathMode,
    PathParams, TargetSource, ToyTask, TrainConfig, VariantLine,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Always the same line, no conditioning.
struct FixedLine(VariantLine);

impl TargetSource for FixedLine {
    fn name(&self) -> &str {
        "fixed"
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn cond_dim(&self) -> usize {
        0
    }

    fn draw(&self, _rng: &mut ChaCha8Rng) -> TaskDraw {
        TaskDraw {
            lines: LineBlocks::single(self.0.clone()),
            condition: Vec::new(),
        }
    }
}

fn fixed_line() -> VariantLine {
    VariantLine::new(vec![1.0, -2.0, 0.5], vec![0.4, 1.0, -0.7]).unwrap()
}

#[test]
fn loss_examples() {
    assert_eq!(cfm_loss(&[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.0);
    assert_eq!(cfm_loss(&[1.5, -0.5, 2.0], &[0.5, -1.5, 1.0]).unwrap(), 1.0);
    let l = cfm_batch_loss(&[vec![1.0], vec![3.0]], &[vec![1.0], vec![1.0]]).unwrap();
    assert_eq!(l, 2.0);
}

#[test]
fn batch_loss_gradient_matches_finite_differences() {
    let preds = vec![vec![0.2, -1.0, 0.5], vec![1.1, 0.3, -0.2]];
    let targets = vec![vec![0.0, 0.4, 1.0], vec![-0.3, 0.8, 0.9]];
    let h = 1e-6;
    for b in 0..2 {
        let g = cfm_loss_grad(&preds[b], &targets[b], 2);
        for i in 0..3 {
            let mut hi = preds.clone();
            let mut lo = preds.clone();
            hi[b][i] += h;
            lo[b][i] -= h;
            let fd = (cfm_batch_loss(&hi, &targets).unwrap()
                - cfm_batch_loss(&lo, &targets).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-8),
                "{fd} vs {}",
                g[i]
            );
        }
    }
}

#[test]
fn ot_mode_equals_zero_projector_machinery() {
    let b = vec![0.4, 1.0, -0.7];
    let blocks = LineBlocks::single(VariantLine::point(b.clone()).unwrap());
    let params = PathParams::ot(0.05).unwrap();
    let zero = ZeroProjector { dim: 3 };
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let s = draw_path_sample(&blocks, &params, &mut r1).unwrap();
        let x0: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut r2)).collect();
        let t: f64 = rand::Rng::random(&mut r2);
        let end = lp_endpoint(&zero, &b, 0.05, &x0);
        let u = lp_velocity(&zero, &b, 0.05, &x0);
        let xt: Vec<f64> = x0
            .iter()
            .zip(&end)
            .map(|(a, e)| (1.0 - t) * a + t * e)
            .collect();
        assert_eq!(s.t, t);
        for i in 0..3 {
            assert!((s.u_t[i] - u[i]).abs() <= 1e-12 * norm(&u));
            assert!((s.x_t[i] - xt[i]).abs() <= 1e-12 * norm(&xt).max(1.0));
        }
    }
}

#[test]
fn path_sample_velocity_mean_is_rejected_offset() {
    // E[u] = (I − P) b, since E[x0] = 0
    let line = fixed_line();
    let blocks = LineBlocks::single(line.clone());
    let params = PathParams::lp(0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 20_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    let mut t_sum = 0.0;
    for _ in 0..n {
        let s = draw_path_sample(&blocks, &params, &mut rng).unwrap();
        assert!((0.0..1.0).contains(&s.t));
        t_sum += s.t;
        for i in 0..3 {
            sum[i] += s.u_t[i];
            sq[i] += s.u_t[i] * s.u_t[i];
        }
    }
    let expect = line.reject(line.offset()).unwrap();
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        let se = ((sq[i] / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(
            (mean - expect[i]).abs() < 4.0 * se,
            "coord {i}: {mean} vs {}",
            expect[i]
        );
    }
    assert!((t_sum / n as f64 - 0.5).abs() < 4.0 * (1.0 / 12.0 / n as f64).sqrt());
}

#[test]
fn zero_epochs_leave_the_model_unchanged() {
    let task = task_2d_line();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Mlp::new(2, 1, 4, &[8], &mut rng).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        lambda: 0.05,
        ..TrainConfig::default()
    };
    let report = train(model.clone(), &task, &cfg).unwrap();
    assert_eq!(report.model, model);
    assert!(report.loss_curve.is_empty());
}

#[test]
fn constant_target_is_learned() {
    // λ = 1 makes u = (I − P) b independent of x0 and t; the least-squares
    // optimum is that constant and the loss floor is 0
    let line = fixed_line();
    let optimum = line.reject(line.offset()).unwrap();
    let task = FixedLine(line);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = Mlp::new(3, 1, 0, &[16], &mut rng).unwrap();
    let cfg = TrainConfig {
        mode: PathMode::Lp,
        lambda: 1.0,
        epochs: 200,
        steps_per_epoch: 10,
        batch_size: 16,
        learning_rate: 1e-2,
        lr_decay: 0.99,
        seed: 1,
        optimizer: Optimizer::Adam,
    };
    let report = train(model, &task, &cfg).unwrap();
    let last = *report.loss_curve.last().unwrap();
    assert!(last < 1e-3, "final loss {last}");
    let out = report.model.forward(&[0.3, -0.1, 0.9], 0.4, &[]).unwrap();
    for i in 0..3 {
        assert!((out[i] - optimum[i]).abs() < 0.05);
    }
}

#[test]
fn training_is_deterministic() {
    let task = task_2d_line();
    let cfg = TrainConfig {
        epochs: 3,
        ..ToyTask::train_config(&task, PathMode::Lp, 17)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = Mlp::new(2, 1, 4, &[16, 16], &mut rng).unwrap();
    let a = train(model.clone(), &task, &cfg).unwrap();
    let b = train(model, &task, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn toy_loss_decreases_over_windows_of_ten_epochs() {
    let task = task_2d_line();
    let cfg = TrainConfig {
        epochs: 100,
        ..task.train_config(PathMode::Lp, 3)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = Mlp::new(2, 1, 4, &[64, 64], &mut rng).unwrap();
    let report = train(model, &task, &cfg).unwrap();
    let windows: Vec<f64> = report
        .loss_curve
        .chunks(10)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for w in windows.windows(2) {
        assert!(w[1] < w[0], "window means {windows:?}");
    }
}

#[test]
fn divergence_is_reported_with_context() {
    let task = task_2d_line();
    let cfg = TrainConfig {
        epochs: 2,
        learning_rate: 1e300,
        optimizer: Optimizer::Sgd,
        ..task.train_config(PathMode::Lp, 0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Mlp::new(2, 1, 4, &[8], &mut rng).unwrap();
    let err = train(model, &task, &cfg).unwrap_err();
    assert!(matches!(err, lpcfm::Error::NonFiniteLoss { .. }), "{err}");
}

#[test]
fn loss_csv_layout() {
    let task = task_2d_line();
    let cfg = TrainConfig {
        epochs: 2,
        ..task.train_config(PathMode::Ot, 0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let report = train(Mlp::new(2, 1, 4, &[4], &mut rng).unwrap(), &task, &cfg).unwrap();
    let mut buf = Vec::new();
    report.write_loss_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("epoch,mean_loss"));
    assert_eq!(text.lines().count(), 3);
}
