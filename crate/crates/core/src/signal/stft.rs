use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex64;

use super::fft::{dft, idft};
use crate::error::{param, Error, Result};

/// Magnitudes at or below this value are floored before taking the log.
pub const MAG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    /// `sin²(π (n + ½) / N)`: a Hann window sampled at half-integer offsets,
    /// so no tap is zero and overlap-add inversion is defined everywhere.
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    let s = (PI * (i as f64 + 0.5) / n as f64).sin();
                    s * s
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, window: Window) -> Result<Self> {
        let cfg = Self { n_fft, hop, window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            return Err(param(
                "n_fft",
                format!("must be even and >= 2, got {}", self.n_fft),
            ));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(param(
                "hop",
                format!("must lie in 1..=n_fft, got {}", self.hop),
            ));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Log-magnitude and wrapped phase, both `frames × bins`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub log_mag: Vec<f64>,
    /// Wrapped to `(−π, π]`; zero where the magnitude is at the floor.
    pub phase: Vec<f64>,
    pub config: StftConfig,
    /// Length of the analysed signal before tail padding.
    pub signal_len: usize,
}

impl Spectrogram {
    /// Converts complex frames into a spectrogram.
    pub fn from_complex(frames: &[Vec<Complex64>], config: StftConfig, signal_len: usize) -> Self {
        let bins = config.bins();
        let mut log_mag = Vec::with_capacity(frames.len() * bins);
        let mut phase = Vec::with_capacity(frames.len() * bins);
        for frame in frames {
            for c in frame {
                let (lm, ph) = polar_parts(*c);
                log_mag.push(lm);
                phase.push(ph);
            }
        }
        Self {
            frames: frames.len(),
            bins,
            log_mag,
            phase,
            config,
            signal_len,
        }
    }

    pub fn to_complex(&self) -> Vec<Vec<Complex64>> {
        self.log_mag
            .chunks_exact(self.bins)
            .zip(self.phase.chunks_exact(self.bins))
            .map(|(lm, ph)| {
                lm.iter()
                    .zip(ph)
                    .map(|(l, p)| Complex64::from_polar(l.exp(), *p))
                    .collect()
            })
            .collect()
    }

    /// Sub-patch of consecutive frames and leading bins.
    pub fn patch(&self, frame_start: usize, frames: usize, bins: usize) -> Result<Spectrogram> {
        if frame_start + frames > self.frames || bins > self.bins {
            return Err(Error::Input(format!(
                "patch {frames}x{bins} at frame {frame_start} exceeds {}x{}",
                self.frames, self.bins
            )));
        }
        let mut log_mag = Vec::with_capacity(frames * bins);
        let mut phase = Vec::with_capacity(frames * bins);
        for f in frame_start..frame_start + frames {
            let row = f * self.bins;
            log_mag.extend_from_slice(&self.log_mag[row..row + bins]);
            phase.extend_from_slice(&self.phase[row..row + bins]);
        }
        Ok(Spectrogram {
            frames,
            bins,
            log_mag,
            phase,
            config: self.config,
            signal_len: self.signal_len,
        })
    }

    /// `frame,bin,log_mag,phase`
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frame,bin,log_mag,phase")?;
        for f in 0..self.frames {
            for k in 0..self.bins {
                let i = f * self.bins + k;
                writeln!(w, "{f},{k},{},{}", self.log_mag[i], self.phase[i])?;
            }
        }
        Ok(())
    }
}

/// `(log max(|c|, floor), arg c)` with the phase wrapped to `(−π, π]`.
pub fn polar_parts(c: Complex64) -> (f64, f64) {
    let mag = c.norm();
    let lm = mag.max(MAG_FLOOR).ln();
    let ph = if mag <= MAG_FLOOR {
        0.0
    } else {
        wrap_phase(c.arg())
    };
    (lm, ph)
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    if y <= -PI {
        y += TAU;
    }
    y
}

/// Absolute angular distance in `[0, π]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_phase(a - b).abs()
}

fn frame_count(len: usize, cfg: &StftConfig) -> usize {
    1 + (len - cfg.n_fft).div_ceil(cfg.hop)
}

/// Complex STFT frames; the tail is zero-padded to complete the last frame.
pub fn stft_complex(signal: &[f64], config: &StftConfig) -> Result<Vec<Vec<Complex64>>> {
    config.validate()?;
    if signal.len() < config.n_fft {
        return Err(Error::Input(format!(
            "signal has {} samples, need at least n_fft = {}",
            signal.len(),
            config.n_fft
        )));
    }
    let window = config.window.coefficients(config.n_fft);
    let frames = frame_count(signal.len(), config);
    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![0.0; config.n_fft];
    for f in 0..frames {
        let start = f * config.hop;
        for (i, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            *b = signal.get(start + i).copied().unwrap_or(0.0) * w;
        }
        out.push(dft(&buf)?);
    }
    Ok(out)
}

pub fn stft(signal: &[f64], config: &StftConfig) -> Result<Spectrogram> {
    let frames = stft_complex(signal, config)?;
    Ok(Spectrogram::from_complex(&frames, *config, signal.len()))
}

/// Weighted overlap-add inverse: `x[n] = Σ w·y_f / Σ w²`.
pub fn istft(spec: &Spectrogram) -> Result<Vec<f64>> {
    let cfg = spec.config;
    cfg.validate()?;
    let window = cfg.window.coefficients(cfg.n_fft);
    let total = (spec.frames.saturating_sub(1)) * cfg.hop + cfg.n_fft;
    let mut acc = vec![0.0; total];
    let mut wsum = vec![0.0; total];
    for (f, frame) in spec.to_complex().iter().enumerate() {
        let y = idft(frame, cfg.n_fft)?;
        let start = f * cfg.hop;
        for i in 0..cfg.n_fft {
            acc[start + i] += window[i] * y[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    let len = spec.signal_len.min(total);
    Ok(acc[..len]
        .iter()
        .zip(&wsum)
        .map(|(a, w)| if *w > 1e-12 { a / w } else { 0.0 })
        .collect())
}
