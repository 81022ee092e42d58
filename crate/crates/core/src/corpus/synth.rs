//! Harmonic-plus-formant voices for a small, fully reproducible speaker set.
//!
//! Each speaker owns a fixed signature (fundamental, three formant bumps,
//! spectral tilt). Utterances are strings of voiced "syllables" separated by
//! short pauses, with per-syllable pitch and formant jitter, vibrato, an
//! amplitude envelope and a low noise floor.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{split_manifest, write_manifest, write_wav, Split, UtteranceRecord, Waveform};
use crate::{Error, Result};

const MAX_HARMONIC_HZ: f64 = 4000.0;
const PEAK_LEVEL: f64 = 0.6;
const NOISE_FLOOR_STD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpusConfig {
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub train_per_speaker: usize,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    pub seed: u64,
}

fn default_duration() -> f64 {
    3.0
}

fn default_sample_rate() -> u32 {
    16000
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            n_speakers: 8,
            utterances_per_speaker: 10,
            train_per_speaker: 5,
            duration_s: default_duration(),
            sample_rate: default_sample_rate(),
            seed: 7,
        }
    }
}

impl SynthCorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.n_speakers == 0 || self.utterances_per_speaker == 0 || self.train_per_speaker == 0 {
            return bad("speaker and utterance counts must be positive");
        }
        if self.train_per_speaker >= self.utterances_per_speaker {
            return bad("train_per_speaker must be below utterances_per_speaker");
        }
        if self.sample_rate == 0 || !(self.duration_s > 0.0) {
            return bad("duration and sample rate must be positive");
        }
        let n = self.duration_s * self.sample_rate as f64;
        if (n - n.round()).abs() > 1e-9 {
            return bad("duration_s * sample_rate must be a whole number of samples");
        }
        Ok(())
    }

    fn num_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Formant {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub gain: f64,
}

/// Fixed per-speaker voice parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceSignature {
    pub f0_hz: f64,
    pub formants: [Formant; 3],
    pub tilt_db_per_octave: f64,
}

impl VoiceSignature {
    fn envelope(&self, freq: f64, formant_scale: &[f64; 3]) -> f64 {
        let tilt = 10f64.powf(self.tilt_db_per_octave * (freq / 100.0).log2() / 20.0);
        let bumps: f64 = self
            .formants
            .iter()
            .zip(formant_scale)
            .map(|(f, s)| {
                let z = (freq - f.center_hz * s) / f.bandwidth_hz;
                f.gain * (-0.5 * z * z).exp()
            })
            .sum();
        tilt * (0.05 + bumps)
    }
}

pub struct SynthCorpus {
    pub records: Vec<UtteranceRecord>,
    pub signatures: Vec<VoiceSignature>,
}

fn speaker_rng(seed: u64, speaker: usize, utterance: Option<usize>) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((speaker as u64) << 32) | utterance.map_or(0, |u| u as u64 + 1);
    rng.set_stream(stream);
    rng
}

/// The signature of speaker `index` under corpus seed `seed`.
pub fn voice_signature(seed: u64, index: usize) -> VoiceSignature {
    let mut rng = speaker_rng(seed, index, None);
    let f0_hz = rng.gen_range(90.0..260.0);
    let formants = [
        Formant {
            center_hz: rng.gen_range(300.0..850.0),
            bandwidth_hz: rng.gen_range(60.0..140.0),
            gain: 1.0,
        },
        Formant {
            center_hz: rng.gen_range(900.0..2300.0),
            bandwidth_hz: rng.gen_range(80.0..180.0),
            gain: rng.gen_range(0.4..0.9),
        },
        Formant {
            center_hz: rng.gen_range(2400.0..3400.0),
            bandwidth_hz: rng.gen_range(100.0..220.0),
            gain: rng.gen_range(0.2..0.5),
        },
    ];
    VoiceSignature {
        f0_hz,
        formants,
        tilt_db_per_octave: rng.gen_range(-9.0..-3.0),
    }
}

struct Syllable {
    start: usize,
    end: usize,
    pitch: f64,
    level: f64,
    amplitudes: Vec<f64>,
}

/// Renders one utterance. Pure function of `(voice, rng state)`.
fn render_utterance(
    voice: &VoiceSignature,
    num_samples: usize,
    sample_rate: u32,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let sr = sample_rate as f64;
    let secs = |s: f64| (s * sr) as usize;

    let mut syllables = Vec::new();
    let mut t = secs(rng.gen_range(0.0..0.1));
    while t < num_samples {
        let len = secs(rng.gen_range(0.15..0.35));
        let pitch = voice.f0_hz * (1.0 + rng.gen_range(-0.08..0.08));
        let scale = [
            1.0 + rng.gen_range(-0.04..0.04),
            1.0 + rng.gen_range(-0.04..0.04),
            1.0 + rng.gen_range(-0.04..0.04),
        ];
        let harmonics = (MAX_HARMONIC_HZ / pitch).floor() as usize;
        let amplitudes = (1..=harmonics)
            .map(|h| voice.envelope(h as f64 * pitch, &scale))
            .collect();
        syllables.push(Syllable {
            start: t,
            end: (t + len).min(num_samples),
            pitch,
            level: rng.gen_range(0.6..1.0),
            amplitudes,
        });
        t += len + secs(rng.gen_range(0.05..0.15));
    }

    let vibrato_hz = rng.gen_range(4.0..6.0);
    let vibrato_depth = rng.gen_range(0.01..0.03);
    let vibrato_phase = rng.gen_range(0.0..2.0 * PI);

    let mut out = vec![0.0; num_samples];
    let mut phase = 0.0f64;
    for syl in &syllables {
        let span = (syl.end - syl.start).max(1) as f64;
        for (n, slot) in out[syl.start..syl.end].iter_mut().enumerate() {
            let i = syl.start + n;
            let time = i as f64 / sr;
            let f0 = syl.pitch
                * (1.0 + vibrato_depth * (2.0 * PI * vibrato_hz * time + vibrato_phase).sin());
            phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI);
            // sin(h*phase) by the Chebyshev recurrence
            let two_cos = 2.0 * phase.cos();
            let (mut prev, mut cur) = (0.0, phase.sin());
            let mut acc = 0.0;
            for &a in &syl.amplitudes {
                acc += a * cur;
                let next = two_cos * cur - prev;
                prev = cur;
                cur = next;
            }
            let envelope = (PI * n as f64 / span).sin().powf(0.5);
            *slot = syl.level * envelope * acc;
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= PEAK_LEVEL / peak);
    }
    for v in &mut out {
        let n: f64 = StandardNormal.sample(rng);
        *v += NOISE_FLOOR_STD * n;
    }
    out
}

/// Renders utterance `utterance` of speaker `speaker` without touching disk.
pub fn synth_utterance(cfg: &SynthCorpusConfig, speaker: usize, utterance: usize) -> Result<Waveform> {
    let voice = voice_signature(cfg.seed, speaker);
    let mut rng = speaker_rng(cfg.seed, speaker, Some(utterance));
    let samples = render_utterance(&voice, cfg.num_samples(), cfg.sample_rate, &mut rng);
    Waveform::new(samples, cfg.sample_rate)
}

/// Writes `wav/<id>.wav` for every utterance plus `manifest.jsonl`,
/// `train.jsonl` and `test.jsonl` under `out_dir`.
pub fn synth_speaker_corpus(cfg: &SynthCorpusConfig, out_dir: impl AsRef<Path>) -> Result<SynthCorpus> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let mut records = Vec::with_capacity(cfg.n_speakers * cfg.utterances_per_speaker);
    let mut signatures = Vec::with_capacity(cfg.n_speakers);
    for s in 0..cfg.n_speakers {
        signatures.push(voice_signature(cfg.seed, s));
        for u in 0..cfg.utterances_per_speaker {
            let id = format!("spk{s:02}_u{u:03}");
            let rel = Path::new("wav").join(format!("{id}.wav"));
            let wave = synth_utterance(cfg, s, u)?;
            write_wav(out_dir.join(&rel), &wave)?;
            records.push(UtteranceRecord {
                id,
                speaker: format!("spk{s:02}"),
                path: rel,
                split: Split::Train,
            });
        }
    }

    let (train, test) = split_manifest(&records, cfg.train_per_speaker, cfg.seed)?;
    let split_of: std::collections::HashMap<_, _> =
        train.iter().chain(&test).map(|r| (r.id.clone(), r.split)).collect();
    for r in &mut records {
        r.split = split_of[&r.id];
    }
    write_manifest(out_dir.join("manifest.jsonl"), &records)?;
    write_manifest(out_dir.join("train.jsonl"), &train)?;
    write_manifest(out_dir.join("test.jsonl"), &test)?;
    Ok(SynthCorpus {
        records,
        signatures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SynthCorpusConfig {
        SynthCorpusConfig {
            n_speakers: 3,
            utterances_per_speaker: 3,
            train_per_speaker: 2,
            duration_s: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut cfg = tiny();
        cfg.train_per_speaker = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny();
        cfg.duration_s = 0.00001;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn signatures_fall_in_range_and_differ() {
        let sigs: Vec<_> = (0..16).map(|i| voice_signature(7, i)).collect();
        for s in &sigs {
            assert!((90.0..260.0).contains(&s.f0_hz));
            assert!(s.formants[0].center_hz < s.formants[1].center_hz);
            assert!(s.formants[1].center_hz < s.formants[2].center_hz);
        }
        assert_ne!(sigs[0].f0_hz, sigs[1].f0_hz);
        assert_eq!(voice_signature(7, 3), sigs[3]);
    }

    #[test]
    fn utterances_are_bounded_and_nonsilent() {
        let w = synth_utterance(&tiny(), 1, 2).unwrap();
        assert_eq!(w.len(), 8000);
        assert!(w.samples.iter().all(|v| v.abs() < 1.0));
        assert!(w.power() > 1e-4);
    }
}
