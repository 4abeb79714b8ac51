//! Euler integration of a learned field, with optional vector calibration.
//!
//! Calibration removes the component of a predicted velocity that is parallel
//! to the target line and rescales what is left back to the original norm:
//!
//! ```text
//! v' = ‖v‖ / ‖(I − P) v‖ · (I − P) v
//! ```
//!
//! It is positively homogeneous, so applying it to the raw model output or to
//! the `1/steps`-scaled increment gives the same state update.

use std::io::Write;

use crate::error::{check_len, param, Error, Result};
use crate::geometry::{LineBlocks, VariantLine};
use crate::linalg::norm;
use crate::net::Mlp;

/// A time-dependent, optionally conditioned velocity field.
pub trait VectorField {
    /// Width of the state (and of the returned velocity).
    fn dim(&self) -> usize;

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>>;
}

impl VectorField for Mlp {
    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        self.forward(x, t, cond)
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        (**self).velocity(x, t, cond)
    }
}

/// Adapts a closure `(x, t, cond) -> v` into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], f64, &[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x, t, cond))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub vcs_enabled: bool,
    /// Guard threshold relative to `‖v‖`.
    pub vcs_epsilon: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 6,
            vcs_enabled: false,
            vcs_epsilon: 1e-6,
        }
    }
}

impl SamplerConfig {
    pub fn new(steps: usize, vcs_enabled: bool) -> Self {
        Self {
            steps,
            vcs_enabled,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(param("steps", "must be at least 1"));
        }
        if !(self.vcs_epsilon > 0.0) {
            return Err(param("vcs_epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Output of a calibration: the vector and whether the degenerate guard fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibrated {
    pub vector: Vec<f64>,
    pub degenerate: bool,
}

/// Calibrates `v` against one line.
///
/// When `‖(I − P) v‖ < epsilon · ‖v‖` the rescaling is ill-defined; `v` is
/// returned unchanged with `degenerate` set. A zero `v` is returned as is.
pub fn vcs_calibrate(v: &[f64], line: &VariantLine, epsilon: f64) -> Result<Calibrated> {
    if line.is_degenerate() {
        return Err(Error::Config(
            "vector calibration needs a nonzero line direction".into(),
        ));
    }
    let v_norm = norm(v);
    let rejected = line.reject(v)?;
    if v_norm == 0.0 {
        return Ok(Calibrated {
            vector: v.to_vec(),
            degenerate: false,
        });
    }
    let r_norm = norm(&rejected);
    if r_norm < epsilon * v_norm {
        return Ok(Calibrated {
            vector: v.to_vec(),
            degenerate: true,
        });
    }
    let s = v_norm / r_norm;
    Ok(Calibrated {
        vector: rejected.into_iter().map(|x| x * s).collect(),
        degenerate: false,
    })
}

/// Calibrates each block of `v` against its own line.
///
/// Blocks whose line has a zero direction are passed through untouched.
pub fn calibrate_blocks(v: &[f64], blocks: &LineBlocks, epsilon: f64) -> Result<Calibrated> {
    check_len("block layout", blocks.dim(), v.len())?;
    let mut vector = Vec::with_capacity(v.len());
    let mut degenerate = false;
    for (range, line) in blocks.iter() {
        let part = &v[range];
        if line.is_degenerate() {
            vector.extend_from_slice(part);
        } else {
            let c = vcs_calibrate(part, line, epsilon)?;
            degenerate |= c.degenerate;
            vector.extend(c.vector);
        }
    }
    Ok(Calibrated { vector, degenerate })
}

/// States visited by the Euler solver, `states[0] = x0`, `states[steps] = x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// Number of steps on which the calibration guard fired.
    pub degenerate_steps: usize,
}

impl Trajectory {
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Sum of Euclidean step lengths.
    pub fn length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| crate::linalg::distance(&w[0], &w[1]))
            .sum()
    }

    /// Writes `step,t,x0,x1,…` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.states.first().map_or(0, Vec::len);
        let steps = self.steps().max(1);
        write!(w, "step,t")?;
        for i in 0..d {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for (k, s) in self.states.iter().enumerate() {
            write!(w, "{k},{}", k as f64 / steps as f64)?;
            for x in s {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// First-order Euler on the uniform left-endpoint grid `t_k = k / steps`.
///
/// With calibration enabled every model output is passed through
/// [`calibrate_blocks`] before the update.
pub fn euler_sample<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    cond: &[f64],
    calibration: Option<&LineBlocks>,
    cfg: &SamplerConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_len("initial state", field.dim(), x0.len())?;
    let blocks = match (cfg.vcs_enabled, calibration) {
        (true, None) => {
            return Err(Error::Config(
                "vector calibration enabled without lines".into(),
            ));
        }
        (true, Some(b)) => {
            check_len("calibration layout", x0.len(), b.dim())?;
            Some(b)
        }
        (false, _) => None,
    };

    let dt = 1.0 / cfg.steps as f64;
    let mut states = Vec::with_capacity(cfg.steps + 1);
    states.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut degenerate_steps = 0;
    for k in 0..cfg.steps {
        let t = k as f64 * dt;
        let mut v = field.velocity(&x, t, cond)?;
        check_len("field output", x.len(), v.len())?;
        if let Some(blocks) = blocks {
            let c = calibrate_blocks(&v, blocks, cfg.vcs_epsilon)?;
            degenerate_steps += c.degenerate as usize;
            v = c.vector;
        }
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "euler sampling",
                step: k,
            });
        }
        states.push(x.clone());
    }
    Ok(Trajectory {
        states,
        degenerate_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    fn line(a: &[f64]) -> VariantLine {
        VariantLine::new(a.to_vec(), vec![0.0; a.len()]).unwrap()
    }

    #[test]
    fn calibrate_orthogonal_is_identity() {
        let c = vcs_calibrate(&[0.0, 2.5], &line(&[1.0, 0.0]), 1e-6).unwrap();
        assert_eq!(c.vector, vec![0.0, 2.5]);
        assert!(!c.degenerate);
    }

    #[test]
    fn calibrate_axis_case() {
        let c = vcs_calibrate(&[3.0, 4.0], &line(&[1.0, 0.0]), 1e-6).unwrap();
        assert!((c.vector[0]).abs() < 1e-15 && (c.vector[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn calibrate_parallel_triggers_guard() {
        let v = [2.0, 4.0];
        let c = vcs_calibrate(&v, &line(&[1.0, 2.0]), 1e-6).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.vector, v.to_vec());
    }

    #[test]
    fn calibrate_zero_vector_passes() {
        let c = vcs_calibrate(&[0.0, 0.0], &line(&[1.0, 2.0]), 1e-6).unwrap();
        assert!(!c.degenerate);
        assert_eq!(c.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn calibrate_rejects_zero_direction() {
        let l = VariantLine::point(vec![0.0, 0.0]).unwrap();
        assert!(vcs_calibrate(&[1.0, 1.0], &l, 1e-6).is_err());
    }

    #[test]
    fn calibrate_norm_and_orthogonality() {
        let a = [0.3, -1.1, 0.8, 2.0];
        let v = [1.5, 0.2, -0.9, 0.4];
        let c = vcs_calibrate(&v, &line(&a), 1e-6).unwrap();
        assert!((norm(&c.vector) - norm(&v)).abs() < 1e-12 * norm(&v));
        assert!(dot(&a, &c.vector).abs() < 1e-12 * norm(&a) * norm(&v));
    }

    #[test]
    fn blocks_single_equals_plain() {
        let l = line(&[0.3, -1.1, 0.8]);
        let v = [1.0, 2.0, 3.0];
        let single = calibrate_blocks(&v, &LineBlocks::single(l.clone()), 1e-6).unwrap();
        assert_eq!(single, vcs_calibrate(&v, &l, 1e-6).unwrap());
    }

    #[test]
    fn blocks_uncalibrated_pass_through() {
        let blocks = LineBlocks::new(vec![
            line(&[1.0, 0.0]),
            VariantLine::point(vec![0.0; 2]).unwrap(),
        ])
        .unwrap();
        let c = calibrate_blocks(&[3.0, 4.0, 7.0, -1.0], &blocks, 1e-6).unwrap();
        assert!((c.vector[1] - 5.0).abs() < 1e-12 && c.vector[0].abs() < 1e-15);
        assert_eq!(&c.vector[2..], &[7.0, -1.0]);
        assert!(calibrate_blocks(&[1.0, 2.0], &blocks, 1e-6).is_err());
    }

    #[test]
    fn zero_field_keeps_state() {
        let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![0.0, 0.0]);
        let tr = euler_sample(&f, &[1.0, -1.0], &[], None, &SamplerConfig::new(5, false)).unwrap();
        assert_eq!(tr.endpoint(), &[1.0, -1.0]);
        assert_eq!(tr.states.len(), 6);
        assert_eq!(tr.length(), 0.0);
    }

    #[test]
    fn constant_field_adds_constant() {
        let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![0.6, -1.2]);
        let tr = euler_sample(&f, &[1.0, 1.0], &[], None, &SamplerConfig::new(6, false)).unwrap();
        assert!((tr.endpoint()[0] - 1.6).abs() < 1e-14);
        assert!((tr.endpoint()[1] + 0.2).abs() < 1e-14);
    }

    #[test]
    fn linear_decay_matches_closed_form() {
        let f = FnField::new(1, |x: &[f64], _, _: &[f64]| vec![-x[0]]);
        for n in [1usize, 2, 6, 100, 10_000] {
            let tr = euler_sample(&f, &[2.0], &[], None, &SamplerConfig::new(n, false)).unwrap();
            let expected = (1.0 - 1.0 / n as f64).powi(n as i32) * 2.0;
            assert!((tr.endpoint()[0] - expected).abs() < 1e-12);
        }
        let tr = euler_sample(&f, &[2.0], &[], None, &SamplerConfig::new(100_000, false)).unwrap();
        assert!((tr.endpoint()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn time_grid_is_left_endpoint() {
        let f = FnField::new(1, |_: &[f64], t, _: &[f64]| vec![t]);
        let tr = euler_sample(&f, &[0.0], &[], None, &SamplerConfig::new(4, false)).unwrap();
        // Σ_{k<4} (k/4)(1/4) = 6/16
        assert!((tr.endpoint()[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn vcs_requires_lines_and_valid_steps() {
        let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![1.0, 0.0]);
        assert!(euler_sample(&f, &[0.0, 0.0], &[], None, &SamplerConfig::new(2, true)).is_err());
        assert!(euler_sample(&f, &[0.0, 0.0], &[], None, &SamplerConfig::new(0, false)).is_err());
        assert!(euler_sample(&f, &[0.0], &[], None, &SamplerConfig::new(1, false)).is_err());
    }

    #[test]
    fn vcs_counts_degenerate_steps() {
        let f = FnField::new(2, |_: &[f64], _, _: &[f64]| vec![1.0, 0.0]);
        let blocks = LineBlocks::single(line(&[1.0, 0.0]));
        let tr = euler_sample(
            &f,
            &[0.0, 0.0],
            &[],
            Some(&blocks),
            &SamplerConfig::new(3, true),
        )
        .unwrap();
        assert_eq!(tr.degenerate_steps, 3);
        assert!((tr.endpoint()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_state_aborts() {
        let f = FnField::new(1, |_: &[f64], _, _: &[f64]| vec![f64::INFINITY]);
        let err = euler_sample(&f, &[0.0], &[], None, &SamplerConfig::new(3, false)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 0, .. }));
    }

    #[test]
    fn trajectory_csv_layout() {
        let tr = Trajectory {
            states: vec![vec![0.0, 1.0], vec![0.5, 1.5]],
            degenerate_steps: 0,
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,t,x0,x1\n0,0,0,1\n1,1,0.5,1.5\n"
        );
    }
}
