//! Audio ingestion, the synthetic speaker corpus and utterance manifests.

mod manifest;
mod synth;
mod wav;

pub use manifest::{read_manifest, split_manifest, write_manifest, Split, UtteranceRecord};
pub use synth::{synth_speaker_corpus, synth_utterance, voice_signature, SynthCorpus, SynthCorpusConfig, VoiceSignature};
pub use wav::{load_wav, write_wav};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Mono PCM audio as 64-bit samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Cuts or zero-pads `w` to exactly `round(duration_s * sample_rate)` samples,
/// keeping the start of the signal.
pub fn segment_utterance(w: &Waveform, duration_s: f64) -> Result<Waveform> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Config(format!(
            "segment duration must be positive, got {duration_s}"
        )));
    }
    if w.samples.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let n = (duration_s * w.sample_rate as f64).round() as usize;
    let mut samples = w.samples.clone();
    samples.resize(n, 0.0);
    Waveform::new(samples, w.sample_rate)
}

/// Adds seeded Gaussian white noise at `snr_db`, where SNR is the ratio of
/// mean-square powers. The drawn noise is rescaled so the realized ratio
/// hits the target exactly rather than only in expectation.
pub fn add_white_noise(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
    }
    let signal_power = w.power();
    if signal_power <= 0.0 {
        return Err(Error::ZeroSignalPower);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..w.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    noise.iter_mut().for_each(|n| *n -= mean);
    let drawn_power = mean_square(&noise);
    if drawn_power <= 0.0 {
        // single-sample waveform: centered noise is identically zero
        return Err(Error::Config(
            "waveform too short to carry zero-mean noise".into(),
        ));
    }
    let target_power = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (target_power / drawn_power).sqrt();
    let samples = w
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + scale * n)
        .collect();
    Waveform::new(samples, w.sample_rate)
}

/// `10 log10(P_clean / P_noise)` with the noise taken as `noisy - clean`.
pub fn measured_snr_db(clean: &Waveform, noisy: &Waveform) -> f64 {
    let noise: Vec<f64> = noisy
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(n, c)| n - c)
        .collect();
    10.0 * (clean.power() / mean_square(&noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize) -> Waveform {
        let samples = (0..n)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 16000.0).sin())
            .collect();
        Waveform::new(samples, 16000).unwrap()
    }

    #[test]
    fn segment_truncates_pads_and_preserves() {
        let long = tone(64000);
        let cut = segment_utterance(&long, 3.0).unwrap();
        assert_eq!(cut.samples, long.samples[..48000]);

        let short = tone(32000);
        let padded = segment_utterance(&short, 3.0).unwrap();
        assert_eq!(padded.len(), 48000);
        assert_eq!(&padded.samples[..32000], &short.samples[..]);
        assert!(padded.samples[32000..].iter().all(|&s| s == 0.0));

        let exact = tone(48000);
        assert_eq!(segment_utterance(&exact, 3.0).unwrap(), exact);
    }

    #[test]
    fn segment_rejects_bad_input() {
        let empty = Waveform {
            samples: vec![],
            sample_rate: 16000,
        };
        assert!(matches!(
            segment_utterance(&empty, 3.0),
            Err(Error::EmptyWaveform)
        ));
        assert!(segment_utterance(&tone(10), 0.0).is_err());
    }

    #[test]
    fn noise_power_follows_snr_definition() {
        let clean = tone(48000);
        for snr in [25.0, 30.0, 0.0] {
            let noisy = add_white_noise(&clean, snr, 11).unwrap();
            let noise: Vec<f64> = noisy
                .samples
                .iter()
                .zip(&clean.samples)
                .map(|(a, b)| a - b)
                .collect();
            let expected = clean.power() / 10f64.powf(snr / 10.0);
            assert!((mean_square(&noise) / expected - 1.0).abs() < 1e-9);
            assert!((measured_snr_db(&clean, &noisy) - snr).abs() < 0.1);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let clean = tone(1600);
        let a = add_white_noise(&clean, 25.0, 3).unwrap();
        let b = add_white_noise(&clean, 25.0, 3).unwrap();
        let c = add_white_noise(&clean, 25.0, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn silent_input_has_no_snr() {
        let zeros = Waveform::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            add_white_noise(&zeros, 25.0, 0),
            Err(Error::ZeroSignalPower)
        ));
    }
}
