use std::path::Path;

use super::Waveform;
use crate::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

/// Reads a 16-bit PCM mono RIFF/WAVE file. Anything else is rejected;
/// nothing is resampled or downmixed.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::UnsupportedWav {
            path: path.to_owned(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let reject = |reason: String| Error::UnsupportedWav {
        path: path.to_owned(),
        reason,
    };
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(reject("floating-point samples; only PCM is supported".into()));
    }
    if spec.bits_per_sample != 16 {
        return Err(reject(format!(
            "{}-bit samples; only 16-bit PCM is supported",
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(reject(format!(
            "{} channels; only mono is supported",
            spec.channels
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| reject(e.to_string()))?;
    if samples.is_empty() {
        return Err(reject("no samples".into()));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Writes `w` as 16-bit PCM mono, rounding to the nearest code and clamping
/// to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::UnsupportedWav {
            path: path.to_owned(),
            reason: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &w.samples {
        let code = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}
