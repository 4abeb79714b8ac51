use std::path::Path;

use crate::error::{Error, Result};

/// Reads a 16-bit PCM mono WAV file into samples in `[−1, 1)`.
///
/// Returns the samples and the sample rate. Extra RIFF chunks are skipped.
pub fn read_wav_mono16(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1
        || spec.bits_per_sample != 16
        || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::Input(format!(
            "only 16-bit PCM mono is supported (got {} channel(s), {} bits, {:?})",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((samples, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, channels: u16, data: &[i16]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for s in data {
            w.write_sample(*s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn reads_mono_and_rejects_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let mono = dir.path().join("mono.wav");
        write(&mono, 1, &[0, 16384, -32768, 32767]);
        let (x, sr) = read_wav_mono16(&mono).unwrap();
        assert_eq!(sr, 16_000);
        assert_eq!(x[..3], [0.0, 0.5, -1.0]);
        assert!(x[3] < 1.0);

        let stereo = dir.path().join("stereo.wav");
        write(&stereo, 2, &[0, 0, 1, 1]);
        assert!(matches!(read_wav_mono16(&stereo), Err(Error::Input(_))));
    }
}
