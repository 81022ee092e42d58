use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{frame_signal, FrameConfig, MelFilterBank, PowerSpectrum};
use crate::corpus::{segment_utterance, Waveform};
use crate::{Error, Result};

/// Floor applied before the log so silent frames stay finite.
pub const LOG_FLOOR: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"MFBF";
const VERSION: u32 = 1;

/// `dim x frames` matrix, row-major: row `d` is one filter's trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, frames: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || frames == 0 {
            return Err(Error::shape("feature matrix", "dimensions must be positive"));
        }
        if values.len() != dim * frames {
            return Err(Error::shape(
                "feature matrix",
                format!("{} values for {dim}x{frames}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::shape("feature matrix", "non-finite value"));
        }
        Ok(Self { dim, frames, values })
    }

    pub fn get(&self, d: usize, t: usize) -> f64 {
        self.values[d * self.frames + t]
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.frames..(d + 1) * self.frames]
    }
}

/// Log mel filterbank energies: column `t` is `ln(max(W P_t, 1e-10))`.
pub fn extract_mfbf(w: &Waveform, bank: &MelFilterBank, cfg: &FrameConfig) -> Result<FeatureMatrix> {
    if bank.sample_rate != w.sample_rate {
        return Err(Error::Config(format!(
            "filter bank built for {} Hz, waveform is {} Hz",
            bank.sample_rate, w.sample_rate
        )));
    }
    if bank.fft_size != cfg.fft_size {
        return Err(Error::Config(format!(
            "filter bank built for a {}-point FFT, frame config uses {}",
            bank.fft_size, cfg.fft_size
        )));
    }
    let frames = frame_signal(w, cfg)?;
    let spectrum = PowerSpectrum::new(cfg.fft_size);
    let t_count = frames.len();
    let mut values = vec![0.0; bank.n_filters * t_count];
    for (t, frame) in frames.iter().enumerate() {
        let energies = bank.apply(&spectrum.compute(frame)?);
        for (m, e) in energies.into_iter().enumerate() {
            values[m * t_count + t] = e.max(LOG_FLOOR).ln();
        }
    }
    FeatureMatrix::new(bank.n_filters, t_count, values)
}

/// Subtracts each row's mean over time.
pub fn apply_cmn(f: &FeatureMatrix) -> FeatureMatrix {
    let mut out = f.clone();
    for row in out.values.chunks_mut(f.frames) {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Segmentation, MFBF extraction and CMN for a fixed set of filter counts.
/// Filter banks are built once and shared.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub frame: FrameConfig,
    pub duration_s: f64,
    banks: BTreeMap<usize, MelFilterBank>,
}

impl FeatureExtractor {
    pub fn new(dims: &[usize], frame: FrameConfig, duration_s: f64, sample_rate: u32) -> Result<Self> {
        frame.validate()?;
        let mut banks = BTreeMap::new();
        for &m in dims {
            banks.insert(m, MelFilterBank::full_band(m, sample_rate, frame.fft_size)?);
        }
        Ok(Self {
            frame,
            duration_s,
            banks,
        })
    }

    /// Default framing, 3 s utterances at 16 kHz.
    pub fn standard(dims: &[usize]) -> Result<Self> {
        Self::new(dims, FrameConfig::default(), 3.0, 16000)
    }

    pub fn bank(&self, m: usize) -> Option<&MelFilterBank> {
        self.banks.get(&m)
    }

    pub fn dims(&self) -> impl Iterator<Item = usize> + '_ {
        self.banks.keys().copied()
    }

    /// Cuts `w` to the fixed duration.
    pub fn segment(&self, w: &Waveform) -> Result<Waveform> {
        segment_utterance(w, self.duration_s)
    }

    /// CMN-normalized MFBF of an already segmented waveform.
    pub fn features(&self, segmented: &Waveform, m: usize) -> Result<FeatureMatrix> {
        let bank = self
            .banks
            .get(&m)
            .ok_or_else(|| Error::Config(format!("no filter bank with {m} filters configured")))?;
        Ok(apply_cmn(&extract_mfbf(segmented, bank, &self.frame)?))
    }
}

pub fn write_features(path: impl AsRef<Path>, f: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut buf = Vec::with_capacity(16 + 8 * f.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(f.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(f.frames as u32).to_le_bytes());
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        kind: "feature",
        path: path.to_owned(),
        reason,
    };
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(bad("missing MFBF header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != VERSION {
        return Err(bad(format!("unsupported version {}", word(4))));
    }
    let (dim, frames) = (word(8) as usize, word(12) as usize);
    let body = &bytes[16..];
    if body.len() != dim * frames * 8 {
        return Err(bad(format!(
            "expected {} payload bytes for {dim}x{frames}, found {}",
            dim * frames * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(dim, frames, values).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn noise_wave(seed: u64, n: usize) -> Waveform {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.gen_range(-0.3..0.3)).collect(), 16000).unwrap()
    }

    #[test]
    fn silent_input_hits_the_floor() {
        let bank = MelFilterBank::full_band(26, 16000, 512).unwrap();
        let w = Waveform::new(vec![0.0; 48000], 16000).unwrap();
        let f = extract_mfbf(&w, &bank, &FrameConfig::default()).unwrap();
        assert_eq!((f.dim, f.frames), (26, 300));
        assert!(f.values.iter().all(|&v| v == LOG_FLOOR.ln()));
    }

    #[test]
    fn doubling_amplitude_adds_log_four() {
        let bank = MelFilterBank::full_band(26, 16000, 512).unwrap();
        let w = noise_wave(2, 16000);
        let loud = Waveform::new(w.samples.iter().map(|s| 2.0 * s).collect(), 16000).unwrap();
        let a = extract_mfbf(&w, &bank, &FrameConfig::default()).unwrap();
        let b = extract_mfbf(&loud, &bank, &FrameConfig::default()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            if *x > LOG_FLOOR.ln() {
                assert!((y - x - 4f64.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sample_rate_mismatch_rejected() {
        let bank = MelFilterBank::full_band(13, 8000, 512).unwrap();
        assert!(extract_mfbf(&noise_wave(0, 8000), &bank, &FrameConfig::default()).is_err());
    }

    #[test]
    fn cmn_zero_means_constant_and_idempotent() {
        let c = FeatureMatrix::new(3, 5, vec![2.5; 15]).unwrap();
        assert!(apply_cmn(&c).values.iter().all(|&v| v == 0.0));

        let ex = FeatureExtractor::standard(&[40]).unwrap();
        let w = ex.segment(&noise_wave(4, 40000)).unwrap();
        let f = ex.features(&w, 40).unwrap();
        assert_eq!((f.dim, f.frames), (40, 300));
        for d in 0..f.dim {
            assert!((f.row(d).iter().sum::<f64>() / 300.0).abs() < 1e-9);
        }
        let twice = apply_cmn(&f);
        for (a, b) in f.values.iter().zip(&twice.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_file_layout_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let f = FeatureMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -0.5]).unwrap();
        write_features(&path, &f).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"MFBF");
        assert_eq!(&bytes[4..16], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[56..64], &(-0.5f64).to_le_bytes());
        assert_eq!(read_features(&path).unwrap(), f);

        std::fs::write(&path, &bytes[..30]).unwrap();
        assert!(matches!(read_features(&path), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn cmn_rows_have_zero_mean(values in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let f = FeatureMatrix::new(3, 4, values).unwrap();
            let g = apply_cmn(&f);
            for d in 0..3 {
                prop_assert!(g.row(d).iter().sum::<f64>().abs() / 4.0 < 1e-9);
            }
        }
    }
}
