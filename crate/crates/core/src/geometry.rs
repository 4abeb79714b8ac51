//! Line-projection target geometry.
//!
//! A target `x1` is represented by the line of its equivalent variants,
//! `L(n) = a n + b`. The operators
//!
//! ```text
//! P = a aᵀ / (aᵀ a)          projection onto span{a}
//! M = λ I + (1 − λ) P        keeps the parallel part, shrinks the rest by λ
//! ```
//!
//! are applied matrix-free: every call costs two dot products and a scaled
//! update, so feature dimensions in the hundreds of thousands are fine.
//!
//! With a standard normal source the target distribution is
//! `N(b − P b, M Mᵀ)`, the straight conditional path is
//! `x_t = (1 − t) x0 + t (b − P b + M x0)` and its (time-invariant) velocity
//! is `u = (I − P)(b − (1 − λ) x0)`, orthogonal to the line.
//!
//! The OT-CFM path is the same formula with `P = 0`, `b = x1` and
//! `λ = σ_min`; [`ZeroProjector`] makes that substitution explicit.
//!
//! Only the standard normal source is supported. For a general
//! `N(μ0, Σ0)` source the target mean becomes `b + P(μ0 − b)` with covariance
//! `M Σ0 Mᵀ`; that form is not implemented here.

use std::ops::Range;

use crate::error::{check_len, param, Error, Result};
use crate::linalg::{dot, norm, norm_sq};

/// A rank-one (or zero) orthogonal projector applied without materializing it.
pub trait Projector {
    fn dim(&self) -> usize;

    /// Writes `P v` into `out`.
    fn project_into(&self, v: &[f64], out: &mut [f64]);
}

/// The `P = 0` projector: the line is undefined and the target is a point.
#[derive(Debug, Clone, Copy)]
pub struct ZeroProjector {
    pub dim: usize,
}

impl Projector for ZeroProjector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project_into(&self, _v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// The line of equivalent variants `L(n) = direction · n + offset`.
///
/// A zero direction is representable (it marks a block with no known
/// invariance) but every projection operation rejects it with
/// [`Error::DegenerateLine`].
#[derive(Debug, Clone, PartialEq)]
pub struct VariantLine {
    direction: Vec<f64>,
    offset: Vec<f64>,
    dir_norm_sq: f64,
}

impl VariantLine {
    pub fn new(direction: Vec<f64>, offset: Vec<f64>) -> Result<Self> {
        if direction.is_empty() {
            return Err(param("direction", "line dimension must be positive"));
        }
        check_len("line offset", direction.len(), offset.len())?;
        if !direction.iter().chain(&offset).all(|x| x.is_finite()) {
            return Err(param("line", "direction and offset must be finite"));
        }
        let dir_norm_sq = norm_sq(&direction);
        Ok(Self {
            direction,
            offset,
            dir_norm_sq,
        })
    }

    /// A line with zero direction: only `offset` is meaningful (OT mode).
    pub fn point(offset: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0; offset.len()], offset)
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn is_degenerate(&self) -> bool {
        // squared norms below the smallest normal float are treated as zero
        !(self.dir_norm_sq >= f64::MIN_POSITIVE)
    }

    /// Same direction, different offset.
    pub fn with_offset(&self, offset: Vec<f64>) -> Result<Self> {
        Self::new(self.direction.clone(), offset)
    }

    fn require_direction(&self) -> Result<()> {
        if self.is_degenerate() {
            Err(Error::DegenerateLine)
        } else {
            Ok(())
        }
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        self.require_direction()?;
        check_len("vector", self.dim(), v.len())
    }

    /// `P v = a (aᵀ v) / (aᵀ a)`
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; v.len()];
        self.project_into(v, &mut out);
        Ok(out)
    }

    /// `(I − P) v`
    pub fn reject(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(reject_with(self, v))
    }

    /// `M v = λ v + (1 − λ) P v`
    pub fn apply_m(&self, lambda: f64, v: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        self.check(v)?;
        Ok(apply_m_with(self, lambda, v))
    }

    /// `b − P b`, the point of the line closest to the origin.
    pub fn target_mean(&self) -> Result<Vec<f64>> {
        self.require_direction()?;
        Ok(reject_with(self, &self.offset))
    }

    /// The endpoint `b − P b + M x0` of the conditional path started at `x0`.
    pub fn sample_target(&self, lambda: f64, x0: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        self.check(x0)?;
        Ok(lp_endpoint(self, &self.offset, lambda, x0))
    }

    /// The conditional velocity `(I − P)(b − (1 − λ) x0)`.
    pub fn conditional_velocity(&self, lambda: f64, x0: &[f64]) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        self.check(x0)?;
        Ok(lp_velocity(self, &self.offset, lambda, x0))
    }

    /// Endpoint and velocity of one conditional draw.
    pub fn conditional_draw(&self, lambda: f64, x0: &[f64]) -> Result<ConditionalDraw> {
        let x1_prime = self.sample_target(lambda, x0)?;
        let velocity = self.conditional_velocity(lambda, x0)?;
        Ok(ConditionalDraw {
            x0: x0.to_vec(),
            x1_prime,
            velocity,
            line: self.clone(),
        })
    }

    /// Euclidean distance from `x` to the line: `‖(I − P)(x − b)‖`.
    pub fn distance_to(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let rel: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        Ok(norm(&reject_with(self, &rel)))
    }

    /// The point of the line nearest to `x`.
    pub fn nearest_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let rel: Vec<f64> = x.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        let mut p = vec![0.0; x.len()];
        self.project_into(&rel, &mut p);
        Ok(p.iter().zip(&self.offset).map(|(p, b)| p + b).collect())
    }
}

impl Projector for VariantLine {
    fn dim(&self) -> usize {
        self.direction.len()
    }

    fn project_into(&self, v: &[f64], out: &mut [f64]) {
        let coeff = dot(&self.direction, v) / self.dir_norm_sq;
        for (o, a) in out.iter_mut().zip(&self.direction) {
            *o = coeff * a;
        }
    }
}

/// One conditional draw: source sample, path endpoint and velocity.
#[derive(Debug, Clone)]
pub struct ConditionalDraw {
    pub x0: Vec<f64>,
    pub x1_prime: Vec<f64>,
    pub velocity: Vec<f64>,
    pub line: VariantLine,
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(param("lambda", format!("must lie in (0, 1], got {lambda}")))
    }
}

fn reject_with<P: Projector + ?Sized>(proj: &P, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    proj.project_into(v, &mut out);
    for (o, x) in out.iter_mut().zip(v) {
        *o = x - *o;
    }
    out
}

fn apply_m_with<P: Projector + ?Sized>(proj: &P, lambda: f64, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    proj.project_into(v, &mut out);
    for (o, x) in out.iter_mut().zip(v) {
        *o = lambda * x + (1.0 - lambda) * *o;
    }
    out
}

/// `b − P b + M x0` for an arbitrary projector.
pub fn lp_endpoint<P: Projector + ?Sized>(
    proj: &P,
    offset: &[f64],
    lambda: f64,
    x0: &[f64],
) -> Vec<f64> {
    let mean = reject_with(proj, offset);
    let mx0 = apply_m_with(proj, lambda, x0);
    mean.iter().zip(&mx0).map(|(m, x)| m + x).collect()
}

/// `(I − P)(b − (1 − λ) x0)` for an arbitrary projector.
pub fn lp_velocity<P: Projector + ?Sized>(
    proj: &P,
    offset: &[f64],
    lambda: f64,
    x0: &[f64],
) -> Vec<f64> {
    let shifted: Vec<f64> = offset
        .iter()
        .zip(x0)
        .map(|(b, x)| b - (1.0 - lambda) * x)
        .collect();
    reject_with(proj, &shifted)
}

/// `x_t = (1 − t) x0 + t x1'`
pub fn path_point(x0: &[f64], x1_prime: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(param("t", format!("must lie in [0, 1], got {t}")));
    }
    check_len("path endpoint", x0.len(), x1_prime.len())?;
    Ok(x0
        .iter()
        .zip(x1_prime)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect())
}

/// OT-CFM endpoint `x1 + σ_min x0` and velocity `x1 − (1 − σ_min) x0`.
pub fn ot_target_and_velocity(
    x1: &[f64],
    sigma_min: f64,
    x0: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("source sample", x1.len(), x0.len())?;
    let endpoint = x1.iter().zip(x0).map(|(a, x)| a + sigma_min * x).collect();
    let velocity = x1
        .iter()
        .zip(x0)
        .map(|(a, x)| a - (1.0 - sigma_min) * x)
        .collect();
    Ok((endpoint, velocity))
}

/// Which conditional path a target uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathMode {
    /// Line projection: the target is the elongated Gaussian around the line.
    Lp,
    /// Optimal transport: the target is a narrow isotropic Gaussian at `b`.
    Ot,
}

impl PathMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PathMode::Lp => "lp",
            PathMode::Ot => "ot",
        }
    }
}

impl std::fmt::Display for PathMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(PathMode::Lp),
            "ot" => Ok(PathMode::Ot),
            other => Err(param(
                "mode",
                format!("expected `lp` or `ot`, got `{other}`"),
            )),
        }
    }
}

/// Path mode plus its shrink parameter.
///
/// In OT mode `sigma_min` plays the role of `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub mode: PathMode,
    pub lambda: f64,
    pub sigma_min: f64,
}

impl PathParams {
    pub fn lp(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            mode: PathMode::Lp,
            lambda,
            sigma_min: 0.0,
        })
    }

    pub fn ot(sigma_min: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma_min) {
            return Err(param(
                "sigma_min",
                format!("must lie in [0, 1), got {sigma_min}"),
            ));
        }
        Ok(Self {
            mode: PathMode::Ot,
            lambda: sigma_min,
            sigma_min,
        })
    }

    /// Builds params for `mode` from a single shrink value.
    pub fn new(mode: PathMode, lambda_or_sigma: f64) -> Result<Self> {
        match mode {
            PathMode::Lp => Self::lp(lambda_or_sigma),
            PathMode::Ot => Self::ot(lambda_or_sigma),
        }
    }

    /// The value that multiplies the orthogonal part of `x0` at the endpoint.
    pub fn shrink(&self) -> f64 {
        match self.mode {
            PathMode::Lp => self.lambda,
            PathMode::Ot => self.sigma_min,
        }
    }
}

/// A feature vector partitioned into contiguous blocks, each with its own line.
///
/// A 2-D toy target is a single block; a spectrogram target has a
/// log-magnitude block followed by a phase block.
#[derive(Debug, Clone, PartialEq)]
pub struct LineBlocks {
    lines: Vec<VariantLine>,
    ranges: Vec<Range<usize>>,
}

impl LineBlocks {
    pub fn new(lines: Vec<VariantLine>) -> Result<Self> {
        if lines.is_empty() {
            return Err(param("lines", "at least one block is required"));
        }
        let mut ranges = Vec::with_capacity(lines.len());
        let mut start = 0;
        for line in &lines {
            ranges.push(start..start + line.dim());
            start += line.dim();
        }
        Ok(Self { lines, ranges })
    }

    pub fn single(line: VariantLine) -> Self {
        let d = line.dim();
        Self {
            lines: vec![line],
            ranges: vec![0..d],
        }
    }

    pub fn dim(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Range<usize>, &VariantLine)> {
        self.ranges.iter().cloned().zip(&self.lines)
    }

    pub fn lines(&self) -> &[VariantLine] {
        &self.lines
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Concatenated offsets, i.e. the data sample `x1`.
    pub fn offset(&self) -> Vec<f64> {
        self.lines
            .iter()
            .flat_map(|l| l.offset().iter().copied())
            .collect()
    }

    /// Endpoint and velocity of the conditional path from `x0`.
    ///
    /// LP mode requires every block to carry a nonzero direction.
    pub fn endpoint_and_velocity(
        &self,
        params: &PathParams,
        x0: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("source sample", self.dim(), x0.len())?;
        let mut endpoint = Vec::with_capacity(x0.len());
        let mut velocity = Vec::with_capacity(x0.len());
        for (range, line) in self.iter() {
            let x0_block = &x0[range];
            let (e, v) = match params.mode {
                PathMode::Lp => {
                    if line.is_degenerate() {
                        return Err(Error::Config(
                            "LP mode needs a nonzero line direction in every block".into(),
                        ));
                    }
                    (
                        line.sample_target(params.lambda, x0_block)?,
                        line.conditional_velocity(params.lambda, x0_block)?,
                    )
                }
                PathMode::Ot => ot_target_and_velocity(line.offset(), params.sigma_min, x0_block)?,
            };
            endpoint.extend(e);
            velocity.extend(v);
        }
        Ok((endpoint, velocity))
    }

    /// Distance to the product of the block lines: `sqrt(Σ dist_i²)`.
    pub fn distance_to(&self, x: &[f64]) -> Result<f64> {
        check_len("point", self.dim(), x.len())?;
        let mut total = 0.0;
        for (range, line) in self.iter() {
            let d = line.distance_to(&x[range])?;
            total += d * d;
        }
        Ok(total.sqrt())
    }
}
