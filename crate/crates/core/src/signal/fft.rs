//! Real-input DFT.
//!
//! Power-of-two lengths use an iterative radix-2 FFT; other even lengths fall
//! back to a direct sum with a precomputed twiddle table.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{check_len, param, Result};

/// `X[k] = Σₙ x[n] e^{−i2πkn/N}` for `k = 0..=N/2`.
pub fn dft(frame: &[f64]) -> Result<Vec<Complex64>> {
    let n = frame.len();
    check_even(n)?;
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(&mut buf, false);
    buf.truncate(n / 2 + 1);
    Ok(buf)
}

/// Inverse of [`dft`]: rebuilds the Hermitian spectrum and returns `n` real samples.
pub fn idft(spectrum: &[Complex64], n: usize) -> Result<Vec<f64>> {
    check_even(n)?;
    check_len("half spectrum", n / 2 + 1, spectrum.len())?;
    let mut buf = Vec::with_capacity(n);
    buf.extend_from_slice(spectrum);
    for k in (1..n / 2).rev() {
        buf.push(spectrum[k].conj());
    }
    transform(&mut buf, true);
    let scale = 1.0 / n as f64;
    Ok(buf.iter().map(|c| c.re * scale).collect())
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(param(
            "n_fft",
            format!("frame length must be even and >= 2, got {n}"),
        ));
    }
    Ok(())
}

/// Unnormalized complex DFT in place; `inverse` flips the exponent sign.
fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n.is_power_of_two() {
        radix2(buf, inverse);
    } else {
        direct(buf, inverse);
    }
}

fn direct(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, sign * TAU * j as f64 / n as f64))
        .collect();
    let input = buf.to_vec();
    for (k, out) in buf.iter_mut().enumerate() {
        *out = input
            .iter()
            .enumerate()
            .map(|(j, x)| x * twiddles[(k * j) % n])
            .sum();
    }
}

fn radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * TAU / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // exact twiddle per index avoids drift from repeated multiplication
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}
