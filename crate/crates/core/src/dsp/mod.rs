//! Framing, spectra, mel filter banks and log filterbank features.

mod features;
mod mel;

pub use features::{
    apply_cmn, extract_mfbf, read_features, write_features, FeatureExtractor, FeatureMatrix,
};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterBank};

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::Waveform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hamming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            window: WindowKind::Hamming,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.frame_ms > self.hop_ms) {
            return Err(Error::Config(format!(
                "need frame_ms > hop_ms > 0, got frame {} ms, hop {} ms",
                self.frame_ms, self.hop_ms
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    /// Frame count for a signal of `num_samples`.
    pub fn num_frames(&self, num_samples: usize, sample_rate: u32) -> usize {
        num_samples / self.hop_samples(sample_rate)
    }

    fn check_for(&self, sample_rate: u32) -> Result<()> {
        self.validate()?;
        if self.fft_size < self.frame_samples(sample_rate) {
            return Err(Error::Config(format!(
                "fft_size {} shorter than a {}-sample frame",
                self.fft_size,
                self.frame_samples(sample_rate)
            )));
        }
        Ok(())
    }
}

/// `w[n] = 0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

/// Splits `w` into `floor(len / hop)` windowed frames. Frame `t` starts at
/// sample `t * hop`; samples past the end of the signal are zero.
pub fn frame_signal(w: &Waveform, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    cfg.check_for(w.sample_rate)?;
    let hop = cfg.hop_samples(w.sample_rate);
    let len = cfg.frame_samples(w.sample_rate);
    let n_frames = cfg.num_frames(w.len(), w.sample_rate);
    if n_frames == 0 {
        return Err(Error::Config(format!(
            "signal of {} samples is shorter than one {hop}-sample hop",
            w.len()
        )));
    }
    let window = match cfg.window {
        WindowKind::Hamming => hamming_window(len),
    };
    Ok((0..n_frames)
        .map(|t| {
            let start = t * hop;
            (0..len)
                .map(|n| w.samples.get(start + n).copied().unwrap_or(0.0) * window[n])
                .collect()
        })
        .collect())
}

/// Reusable FFT plan producing one-sided power spectra.
#[derive(Clone)]
pub struct PowerSpectrum {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
}

impl std::fmt::Debug for PowerSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PowerSpectrum")
            .field("fft_size", &self.fft_size)
            .finish()
    }
}

impl PowerSpectrum {
    pub fn new(fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Self { fft, fft_size }
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `|X[k]|^2` for `k = 0..=fft_size/2`, the frame zero-padded to `fft_size`.
    pub fn compute(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() > self.fft_size {
            return Err(Error::shape(
                "power_spectrum",
                format!("frame of {} exceeds fft size {}", frame.len(), self.fft_size),
            ));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.num_bins()].iter().map(|c| c.norm_sqr()).collect())
    }
}

pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    PowerSpectrum::new(fft_size).compute(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    /// Direct O(N^2) DFT, independent of the FFT path.
    fn dft_power(frame: &[f64], n: usize) -> Vec<f64> {
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn three_seconds_give_three_hundred_frames() {
        let w = Waveform::new(vec![0.1; 48000], 16000).unwrap();
        let frames = frame_signal(&w, &FrameConfig::default()).unwrap();
        assert_eq!(frames.len(), 300);
        assert!(frames.iter().all(|f| f.len() == 400));
    }

    #[test]
    fn constant_signal_frames_equal_window() {
        let w = Waveform::new(vec![1.0; 4000], 16000).unwrap();
        let frames = frame_signal(&w, &FrameConfig::default()).unwrap();
        let window = hamming_window(400);
        for f in &frames[..frames.len() - 3] {
            assert_eq!(f, &window);
        }
        // last frames run past the end and are zero-padded
        assert_eq!(frames.last().unwrap()[399], 0.0);
    }

    #[test]
    fn frame_config_invariants() {
        let same = FrameConfig {
            hop_ms: 25.0,
            ..Default::default()
        };
        assert!(same.validate().is_err());
        let odd = FrameConfig {
            fft_size: 500,
            ..Default::default()
        };
        assert!(odd.validate().is_err());
        let short = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(frame_signal(&short, &FrameConfig::default()).is_err());
    }

    #[test]
    fn hamming_endpoints() {
        let w = hamming_window(400);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[399] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn zero_and_dc_spectra() {
        assert!(power_spectrum(&[0.0; 400], 512).unwrap().iter().all(|&p| p == 0.0));
        let c = 0.7;
        let window = hamming_window(400);
        let frame: Vec<f64> = window.iter().map(|w| c * w).collect();
        let p = power_spectrum(&frame, 512).unwrap();
        let expected = (c * window.iter().sum::<f64>()).powi(2);
        assert!((p[0] - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn matches_direct_dft_on_random_frames() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let plan = PowerSpectrum::new(512);
        for _ in 0..5 {
            let frame: Vec<f64> = (0..400).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fast = plan.compute(&frame).unwrap();
            let slow = dft_power(&frame, 512);
            let max = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(max < 1e-9, "max abs diff {max}");
        }
    }

    #[test]
    fn bin_centered_sine_peaks_at_its_bin() {
        let k0 = 40;
        let window = hamming_window(400);
        let frame: Vec<f64> = (0..400)
            .map(|n| window[n] * (2.0 * PI * k0 as f64 * n as f64 / 512.0).sin())
            .collect();
        let p = power_spectrum(&frame, 512).unwrap();
        let peak = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(peak, k0);
        let slow = dft_power(&frame, 512);
        for (a, b) in p.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
        // Hamming sidelobes sit more than 40 dB below the peak
        assert!(p[k0 + 10] < p[k0] * 1e-4);
    }

    #[test]
    fn oversized_frame_rejected() {
        assert!(power_spectrum(&[0.0; 600], 512).is_err());
    }
}
