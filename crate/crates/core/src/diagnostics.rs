//! Self-check suites behind the `verify` and `gradcheck` commands.
//!
//! Each suite returns named checks with the worst observed error and the
//! tolerance it was held to.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::flow::{cfm_loss, cfm_loss_grad};
use crate::geometry::{
    lp_endpoint, lp_velocity, ot_target_and_velocity, path_point, VariantLine, ZeroProjector,
};
use crate::linalg::{dot, norm, scale, sub};
use crate::net::Mlp;
use crate::signal::{
    dft, istft, measure_linear_shift, stft, verify_scaling, verify_shifting, StftConfig, Window,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst error observed (or the measured value for report-only checks).
    pub value: f64,
    /// `None` for report-only checks.
    pub tolerance: Option<f64>,
}

impl Check {
    pub fn bounded(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: Some(tolerance),
        }
    }

    pub fn report(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: None,
        }
    }

    pub fn passed(&self) -> bool {
        match self.tolerance {
            Some(tol) => self.value <= tol,
            None => true,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tolerance {
            Some(tol) => {
                let tag = if self.passed() { "PASS" } else { "FAIL" };
                write!(
                    f,
                    "{tag}  {:<44} max {:.3e}  (tol {tol:.0e})",
                    self.name, self.value
                )
            }
            None => write!(f, "INFO  {:<44} {:.3e}", self.name, self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Suite {
    fn new(title: &str) -> Self {
        Self {
            title: title.to_string(),
            checks: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Projector and velocity identities over `cases` random lines per dimension.
pub fn geometry_suite(cases: usize, dims: &[usize], seed: u64) -> Result<Suite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idem = 0.0f64;
    let mut annihilate = 0.0f64;
    let mut split = 0.0f64;
    let mut scale_inv = 0.0f64;
    let mut ortho = 0.0f64;
    let mut closed = 0.0f64;
    let mut ot = 0.0f64;

    for &d in dims {
        for _ in 0..cases {
            let a = normal_vec(&mut rng, d);
            let b = normal_vec(&mut rng, d);
            let v = normal_vec(&mut rng, d);
            let x0 = normal_vec(&mut rng, d);
            let lambda: f64 = rng.random_range(1e-4..1.0);
            let line = VariantLine::new(a.clone(), b.clone())?;

            let pv = line.project(&v)?;
            let ppv = line.project(&pv)?;
            idem = idem.max(rel(norm(&sub(&ppv, &pv)), norm(&pv)));

            annihilate = annihilate.max(rel(norm(&line.reject(&a)?), norm(&a)));
            let rv = line.reject(&v)?;
            let sum: Vec<f64> = pv.iter().zip(&rv).map(|(p, r)| p + r).collect();
            split = split.max(rel(norm(&sub(&sum, &v)), norm(&v)));

            let c = loop {
                let c: f64 = rng.random_range(-10.0..10.0);
                if c.abs() > 1e-3 {
                    break c;
                }
            };
            // relative to ‖v‖: P has unit norm, and ‖P v‖ can be arbitrarily small
            let scaled = VariantLine::new(scale(&a, c), b.clone())?;
            scale_inv = scale_inv.max(rel(norm(&sub(&scaled.project(&v)?, &pv)), norm(&v)));

            let u = line.conditional_velocity(lambda, &x0)?;
            ortho = ortho.max(rel(dot(&a, &u).abs(), norm(&a) * norm(&u)));

            // (I − P)(b − (1 − λ) x0) written out with its own dot products
            let w: Vec<f64> = b
                .iter()
                .zip(&x0)
                .map(|(bi, xi)| bi - (1.0 - lambda) * xi)
                .collect();
            let coef = dot(&a, &w) / dot(&a, &a);
            let expect: Vec<f64> = w.iter().zip(&a).map(|(wi, ai)| wi - coef * ai).collect();
            closed = closed.max(rel(norm(&sub(&u, &expect)), norm(&expect)));

            let zero = ZeroProjector { dim: d };
            let (x1, ut) = ot_target_and_velocity(&b, lambda, &x0)?;
            let end = lp_endpoint(&zero, &b, lambda, &x0);
            let vel = lp_velocity(&zero, &b, lambda, &x0);
            let t: f64 = rng.random();
            let xt_lp = path_point(&x0, &end, t)?;
            let xt_ot: Vec<f64> = x0
                .iter()
                .zip(&b)
                .map(|(x, bi)| (1.0 - (1.0 - lambda) * t) * x + t * bi)
                .collect();
            ot = ot
                .max(rel(norm(&sub(&vel, &ut)), norm(&ut)))
                .max(rel(norm(&sub(&end, &x1)), norm(&x1)))
                .max(rel(norm(&sub(&xt_lp, &xt_ot)), norm(&xt_ot)));
        }
    }

    let mut suite = Suite::new("geometry");
    suite.checks = vec![
        Check::bounded("projector idempotence (rel)", idem, 1e-12),
        Check::bounded("reject(a) = 0 (rel)", annihilate, 1e-12),
        Check::bounded("project + reject = v (rel)", split, 1e-12),
        Check::bounded("direction scale invariance (rel)", scale_inv, 1e-12),
        Check::bounded("velocity orthogonality |a.u|/(|a||u|)", ortho, 1e-10),
        Check::bounded("velocity closed form (rel)", closed, 1e-12),
        Check::bounded("OT reduction with P = 0 (rel)", ot, 1e-14),
    ];
    Ok(suite)
}

/// Synthetic test signal: a few random partials plus a little noise.
pub fn test_tone(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partials: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.01..0.45),
                rng.random_range(0.2..1.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    (0..len)
        .map(|n| {
            let tone: f64 = partials
                .iter()
                .map(|(f, a, p)| a * (std::f64::consts::TAU * f * n as f64 + p).sin())
                .sum();
            let noise: f64 = rng.sample(StandardNormal);
            tone + 0.01 * noise
        })
        .collect()
}

fn naive_dft_error(frame: &[f64]) -> Result<f64> {
    let n = frame.len();
    let fast = dft(frame)?;
    let mut worst = 0.0f64;
    for (k, x) in fast.iter().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, s) in frame.iter().enumerate() {
            let ang = -std::f64::consts::TAU * ((k * j) % n) as f64 / n as f64;
            re += s * ang.cos();
            im += s * ang.sin();
        }
        worst = worst.max((x.re - re).hypot(x.im - im));
    }
    Ok(worst)
}

fn parseval_error(frame: &[f64]) -> Result<f64> {
    let n = frame.len();
    let x = dft(frame)?;
    let half = n / 2;
    let mut spec = x[0].norm_sqr() + x[half].norm_sqr();
    for c in &x[1..half] {
        spec += 2.0 * c.norm_sqr();
    }
    spec /= n as f64;
    let time: f64 = frame.iter().map(|s| s * s).sum();
    Ok(rel((spec - time).abs(), time))
}

/// DFT, STFT and line-property checks. With `audio`, the scaling and
/// shifting verifiers run on the given samples instead of a synthetic tone.
pub fn signal_suite(audio: Option<&[f64]>, seed: u64) -> Result<Suite> {
    let mut suite = Suite::new("signal");

    let mut dft_err = 0.0f64;
    let mut parseval = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in [16, 64, 100, 1024] {
        for _ in 0..4 {
            let frame = normal_vec(&mut rng, n);
            dft_err = dft_err.max(naive_dft_error(&frame)?);
            parseval = parseval.max(parseval_error(&frame)?);
        }
    }
    suite
        .checks
        .push(Check::bounded("dft vs naive sum (abs)", dft_err, 1e-10));
    suite
        .checks
        .push(Check::bounded("Parseval (rel)", parseval, 1e-9));

    let hann = StftConfig::new(1024, 256, Window::Hann)?;
    let tone = test_tone(4096, seed ^ 1);
    let back = istft(&stft(&tone, &hann)?)?;
    let round = tone
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    suite
        .checks
        .push(Check::bounded("stft round trip (abs)", round, 1e-8));

    let source = match audio {
        Some(samples) => samples.to_vec(),
        None => test_tone(8192, seed ^ 2),
    };
    let cfg = if source.len() >= 1024 {
        hann
    } else {
        StftConfig::new(16, 4, Window::Hann)?
    };
    for s in [0.5, 2.0, -3.0] {
        let err = verify_scaling(&source, s, &cfg)?;
        suite
            .checks
            .push(Check::bounded(format!("scaling s = {s}"), err, 1e-9));
    }

    for n in [16usize, 64] {
        let rect = StftConfig::new(n, n, Window::Rectangular)?;
        let frame = if source.len() >= n {
            source[..n].to_vec()
        } else {
            normal_vec(&mut rng, n)
        };
        for tau in [1i64, 5, n as i64 / 2] {
            let err = verify_shifting(&frame, tau, &rect)?;
            suite.checks.push(Check::bounded(
                format!("circular shift N = {n}, tau = {tau} (rad)"),
                err,
                1e-6,
            ));
        }
    }

    if source.len() >= 4 * cfg.n_fft {
        let shift = measure_linear_shift(&source, 5, &cfg)?;
        suite.checks.push(Check::report(
            "linear shift tau = 5, mean error (rad)",
            shift.mean_error,
        ));
        suite.checks.push(Check::report(
            "linear shift tau = 5, max error (rad)",
            shift.max_error,
        ));
    }
    Ok(suite)
}

/// Largest gradient disagreement for one model and input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckResult {
    /// Largest relative error among parameters whose gradient magnitude
    /// exceeds the absolute guard.
    pub max_rel_error: f64,
    pub params_checked: usize,
}

/// Central finite differences of `cfm_loss(forward(x, t, cond), target)`
/// against the analytic backward pass, parameter by parameter.
pub fn gradcheck(
    model: &Mlp,
    x: &[f64],
    t: f64,
    cond: &[f64],
    target: &[f64],
    step: f64,
    abs_guard: f64,
) -> Result<GradcheckResult> {
    let out = model.forward(x, t, cond)?;
    let analytic = model.backward(x, t, cond, &cfm_loss_grad(&out, target, 1))?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (li, lg) in analytic.layers.iter().enumerate() {
        let n_w = lg.weights.len();
        for (pi, &g) in lg.weights.iter().chain(&lg.bias).enumerate() {
            let orig = *param_mut(&mut probe, li, pi, n_w);
            *param_mut(&mut probe, li, pi, n_w) = orig + step;
            let hi = cfm_loss(&probe.forward(x, t, cond)?, target)?;
            *param_mut(&mut probe, li, pi, n_w) = orig - step;
            let lo = cfm_loss(&probe.forward(x, t, cond)?, target)?;
            *param_mut(&mut probe, li, pi, n_w) = orig;
            let fd = (hi - lo) / (2.0 * step);
            let denom = fd.abs().max(g.abs());
            checked += 1;
            if denom > abs_guard {
                worst = worst.max((fd - g).abs() / denom);
            }
        }
    }
    Ok(GradcheckResult {
        max_rel_error: worst,
        params_checked: checked,
    })
}

fn param_mut(model: &mut Mlp, layer: usize, index: usize, n_weights: usize) -> &mut f64 {
    let layer = &mut model.layers_mut()[layer];
    if index < n_weights {
        &mut layer.weights[index]
    } else {
        &mut layer.bias[index - n_weights]
    }
}

/// Gradient check over `models` random small networks.
pub fn gradcheck_suite(models: usize, seed: u64) -> Result<Suite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut params = 0usize;
    for _ in 0..models {
        let d = rng.random_range(1..=4);
        let time_width = [0, 1, 2, 4][rng.random_range(0..4)];
        let cond_width = rng.random_range(0..=3);
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
        let model = Mlp::new(d, time_width, cond_width, &hidden, &mut rng)?;
        let x = normal_vec(&mut rng, d);
        let cond = normal_vec(&mut rng, cond_width);
        let target = normal_vec(&mut rng, d);
        let t: f64 = rng.random();
        let r = gradcheck(&model, &x, t, &cond, &target, 1e-6, 1e-8)?;
        worst = worst.max(r.max_rel_error);
        params += r.params_checked;
    }
    let mut suite = Suite::new("gradcheck");
    suite.checks.push(Check::bounded(
        format!("{models} models, {params} parameters (rel)"),
        worst,
        1e-4,
    ));
    Ok(suite)
}
