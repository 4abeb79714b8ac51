//! The exact (marginal) field of a single conditional target.
//!
//! For a fixed target the conditional paths do not cross, so the field that
//! transports `N(0, I)` along them is a closed-form function of `(x, t)`:
//! invert the path for `x0`, then return the path velocity. Integrated with
//! any Euler step count it lands exactly on the conditional endpoint.

use crate::error::{check_len, Result};
use crate::geometry::{LineBlocks, PathMode, PathParams, Projector};
use crate::sampler::VectorField;

#[derive(Debug, Clone)]
pub struct ExactField {
    lines: LineBlocks,
    params: PathParams,
}

impl ExactField {
    pub fn new(lines: LineBlocks, params: PathParams) -> Self {
        Self { lines, params }
    }
}

impl VectorField for ExactField {
    fn dim(&self) -> usize {
        self.lines.dim()
    }

    fn velocity(&self, x: &[f64], t: f64, _cond: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.lines.dim(), x.len())?;
        let shrink = 1.0 - self.params.shrink();
        let denom = 1.0 - shrink * t;
        let mut out = Vec::with_capacity(x.len());
        for (range, line) in self.lines.iter() {
            let xb = &x[range];
            let b = line.offset();
            match self.params.mode {
                PathMode::Ot => {
                    // x = (1 − (1 − σ) t) x0 + t b
                    out.extend(xb.iter().zip(b).map(|(xi, bi)| {
                        let x0 = (xi - t * bi) / denom;
                        bi - shrink * x0
                    }));
                }
                PathMode::Lp => {
                    // parallel part of x0 is carried unchanged; orthogonal part
                    // follows (1 − (1 − λ) t) x0⊥ + t c with c = (I − P) b
                    let c = line.target_mean()?;
                    let mut px = vec![0.0; xb.len()];
                    line.project_into(xb, &mut px);
                    out.extend(xb.iter().zip(&px).zip(&c).map(|((xi, pi), ci)| {
                        let x0_orth = (xi - pi - t * ci) / denom;
                        ci - shrink * x0_orth
                    }));
                }
            }
        }
        Ok(out)
    }
}
