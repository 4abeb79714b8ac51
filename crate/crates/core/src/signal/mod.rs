//! DFT/STFT utilities and the log-magnitude / phase equivalence lines.

mod fft;
mod lines;
mod stft;
mod wav;

pub use fft::{dft, idft};
pub use lines::{
    circular_shift, kappa, measure_linear_shift, scaling_line, scaling_line_from, shifting_line,
    shifting_line_from, verify_scaling, verify_shifting, ShiftReport,
};
pub use stft::{
    angular_distance, istft, polar_parts, stft, stft_complex, wrap_phase, Spectrogram, StftConfig,
    Window, MAG_FLOOR,
};
pub use wav::read_wav_mono16;
