//! Equivalence lines of STFT features and checks of the properties behind them.
//!
//! Scaling a waveform by `s` adds `log|s|` to every log-magnitude bin, so the
//! log-magnitude variants lie on a line with all-ones direction. Delaying a
//! frame by `τ` samples subtracts `τ · 2πk/N` from the phase of bin `k`, so
//! phase variants lie on a line with direction `−κ`, `κ[k] = 2πk/N`.

use std::f64::consts::TAU;

use super::fft::dft;
use super::stft::{angular_distance, stft_complex, Spectrogram, StftConfig, MAG_FLOOR};
use crate::error::{param, Result};
use crate::geometry::VariantLine;

/// `κ[k] = 2πk / N` for `k = 0..=N/2`.
pub fn kappa(n_fft: usize) -> Vec<f64> {
    (0..=n_fft / 2)
        .map(|k| TAU * k as f64 / n_fft as f64)
        .collect()
}

/// Line over the flattened log-magnitude block: direction all ones, offset `log X_mag`.
pub fn scaling_line_from(log_mag: &[f64]) -> Result<VariantLine> {
    VariantLine::new(vec![1.0; log_mag.len()], log_mag.to_vec())
}

/// Line over the flattened phase block: direction `−κ` tiled per frame, offset `X_pha`.
pub fn shifting_line_from(phase: &[f64], n_fft: usize, bins: usize) -> Result<VariantLine> {
    if bins == 0 || phase.len() % bins != 0 {
        return Err(param(
            "bins",
            format!(
                "{} phase values do not tile into rows of {bins}",
                phase.len()
            ),
        ));
    }
    let k = kappa(n_fft);
    if bins > k.len() {
        return Err(param(
            "bins",
            format!("{bins} bins exceed n_fft/2 + 1 = {}", k.len()),
        ));
    }
    let direction = (0..phase.len()).map(|i| -k[i % bins]).collect();
    VariantLine::new(direction, phase.to_vec())
}

/// Scaling line of a spectrogram's log-magnitude block.
pub fn scaling_line(spec: &Spectrogram) -> Result<VariantLine> {
    scaling_line_from(&spec.log_mag)
}

/// Shifting line of a spectrogram's phase block.
pub fn shifting_line(spec: &Spectrogram) -> Result<VariantLine> {
    shifting_line_from(&spec.phase, spec.config.n_fft, spec.bins)
}

/// Max over bins above the floor of `|log|X_s| − log|X| − log|s||`.
pub fn verify_scaling(signal: &[f64], s: f64, config: &StftConfig) -> Result<f64> {
    if s == 0.0 || !s.is_finite() {
        return Err(param("s", "scale must be finite and nonzero"));
    }
    let scaled: Vec<f64> = signal.iter().map(|x| x * s).collect();
    let a = stft_complex(signal, config)?;
    let b = stft_complex(&scaled, config)?;
    let log_s = s.abs().ln();
    let mut worst = 0.0f64;
    for (fa, fb) in a.iter().zip(&b) {
        for (ca, cb) in fa.iter().zip(fb) {
            let (ma, mb) = (ca.norm(), cb.norm());
            if ma > MAG_FLOOR && mb > MAG_FLOOR {
                worst = worst.max((mb.ln() - ma.ln() - log_s).abs());
            }
        }
    }
    Ok(worst)
}

/// Circularly delays one `N`-point frame by `tau` samples and returns the max
/// wrapped angular error between the observed phases and `X_pha[k] − κ[k] τ`.
pub fn verify_shifting(frame: &[f64], tau: i64, config: &StftConfig) -> Result<f64> {
    let n = config.n_fft;
    if frame.len() != n {
        return Err(param(
            "frame",
            format!("expected {n} samples, got {}", frame.len()),
        ));
    }
    if tau.unsigned_abs() as usize > n {
        return Err(param("tau", format!("|tau| must not exceed N = {n}")));
    }
    let shifted = circular_shift(frame, tau);
    let x = dft(frame)?;
    let y = dft(&shifted)?;
    let k = kappa(n);
    let mut worst = 0.0f64;
    for ((cx, cy), kk) in x.iter().zip(&y).zip(&k) {
        if cx.norm() > MAG_FLOOR {
            let predicted = cx.arg() - kk * tau as f64;
            worst = worst.max(angular_distance(cy.arg(), predicted));
        }
    }
    Ok(worst)
}

/// `y[n] = x[(n − tau) mod N]`
pub fn circular_shift(frame: &[f64], tau: i64) -> Vec<f64> {
    let n = frame.len() as i64;
    (0..n)
        .map(|i| frame[(i - tau).rem_euclid(n) as usize])
        .collect()
}

/// Phase-ramp agreement for a linear (non-circular) delay under the windowed STFT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftReport {
    pub max_error: f64,
    pub mean_error: f64,
    pub bins_compared: usize,
}

/// Delays `signal` by `tau >= 0` samples (zero fill) and compares STFT phases
/// with the predicted ramp. Only approximate; the error is reported, not bounded.
pub fn measure_linear_shift(
    signal: &[f64],
    tau: usize,
    config: &StftConfig,
) -> Result<ShiftReport> {
    let mut delayed = vec![0.0; tau];
    delayed.extend_from_slice(signal);
    delayed.truncate(signal.len());
    let a = stft_complex(signal, config)?;
    let b = stft_complex(&delayed, config)?;
    let k = kappa(config.n_fft);
    let (mut worst, mut sum, mut count) = (0.0f64, 0.0, 0usize);
    // skip frames that touch the zero-filled head
    let first = tau.div_ceil(config.hop);
    for (fa, fb) in a.iter().zip(&b).skip(first) {
        let peak = fa.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for ((ca, cb), kk) in fa.iter().zip(fb).zip(&k) {
            if ca.norm() > 1e-3 * peak && ca.norm() > MAG_FLOOR {
                let e = angular_distance(cb.arg(), ca.arg() - kk * tau as f64);
                worst = worst.max(e);
                sum += e;
                count += 1;
            }
        }
    }
    Ok(ShiftReport {
        max_error: worst,
        mean_error: if count > 0 { sum / count as f64 } else { 0.0 },
        bins_compared: count,
    })
}
