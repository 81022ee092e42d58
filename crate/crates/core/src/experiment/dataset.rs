use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::corpus::{add_white_noise, load_wav, UtteranceRecord, Waveform};
use crate::dsp::{read_features, write_features, FeatureExtractor, FeatureMatrix};
use crate::{Error, Result};

/// Where the MFBF of utterance `id` with `m` filters lives.
pub fn feature_path(dir: &Path, id: &str, m: usize) -> PathBuf {
    dir.join(format!("{id}.mfbf{m}.bin"))
}

/// White noise mixed into a waveform before feature extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Noise seed of the `index`-th utterance in an evaluation pass.
    pub fn utterance_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
    }
}

/// Segments `w`, optionally mixes in noise, and computes CMN-normalized
/// features for each dimension in `dims`. Clean and noisy evaluation, and
/// offline extraction, all go through here.
pub fn utterance_features(
    extractor: &FeatureExtractor,
    w: &Waveform,
    dims: &[usize],
    noise: Option<(f64, u64)>,
) -> Result<Vec<FeatureMatrix>> {
    let segmented = extractor.segment(w)?;
    let input = match noise {
        Some((snr_db, seed)) => add_white_noise(&segmented, snr_db, seed)?,
        None => segmented,
    };
    dims.iter().map(|&m| extractor.features(&input, m)).collect()
}

/// Extracts and writes feature files for every record. Returns the number
/// of files written.
pub fn extract_to_dir(
    records: &[UtteranceRecord],
    audio_base: &Path,
    dims: &[usize],
    out_dir: &Path,
) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut extractor: Option<FeatureExtractor> = None;
    let mut written = 0;
    for r in records {
        let w = load_wav(r.audio_path(audio_base))?;
        let ex = match &extractor {
            Some(ex) => ex,
            None => extractor.insert(FeatureExtractor::new(
                dims,
                Default::default(),
                3.0,
                w.sample_rate,
            )?),
        };
        for (m, f) in dims.iter().zip(utterance_features(ex, &w, dims, None)?) {
            write_features(feature_path(out_dir, &r.id, *m), &f)?;
            written += 1;
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub label: usize,
    /// One map per network branch, in branch order.
    pub features: Vec<FeatureMatrix>,
}

/// Labeled feature maps, with labels indexing `speakers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub speakers: Vec<String>,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Builds a dataset from records and a feature lookup. Speakers not in
    /// `speakers` are rejected.
    pub fn from_records<F>(records: &[UtteranceRecord], speakers: &[String], mut lookup: F) -> Result<Self>
    where
        F: FnMut(usize, &UtteranceRecord) -> Result<Vec<FeatureMatrix>>,
    {
        let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut examples = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let label = *index
                .get(r.speaker.as_str())
                .ok_or_else(|| Error::Mismatch(format!("utterance {} has unknown speaker {}", r.id, r.speaker)))?;
            examples.push(Example {
                id: r.id.clone(),
                label,
                features: lookup(i, r)?,
            });
        }
        Ok(Self {
            speakers: speakers.to_vec(),
            examples,
        })
    }

    /// Loads precomputed feature files.
    pub fn load(records: &[UtteranceRecord], speakers: &[String], dims: &[usize], features_dir: &Path) -> Result<Self> {
        Self::from_records(records, speakers, |_, r| {
            dims.iter()
                .map(|&m| {
                    let f = read_features(feature_path(features_dir, &r.id, m))?;
                    if f.dim != m {
                        return Err(Error::Mismatch(format!(
                            "feature file for {} has {} rows, expected {m}",
                            r.id, f.dim
                        )));
                    }
                    Ok(f)
                })
                .collect()
        })
    }

    /// Extracts features straight from audio, optionally noisy.
    pub fn from_audio(
        records: &[UtteranceRecord],
        speakers: &[String],
        dims: &[usize],
        audio_base: &Path,
        noise: Option<NoiseSpec>,
    ) -> Result<Self> {
        let mut extractor: Option<FeatureExtractor> = None;
        Self::from_records(records, speakers, |i, r| {
            let w = load_wav(r.audio_path(audio_base))?;
            let ex = match &extractor {
                Some(ex) => ex,
                None => extractor.insert(FeatureExtractor::new(dims, Default::default(), 3.0, w.sample_rate)?),
            };
            utterance_features(ex, &w, dims, noise.map(|n| (n.snr_db, n.utterance_seed(i))))
        })
    }
}

/// Sorted distinct speaker names.
pub fn speakers_of(records: &[UtteranceRecord]) -> Vec<String> {
    let mut s: Vec<String> = records.iter().map(|r| r.speaker.clone()).collect();
    s.sort();
    s.dedup();
    s
}
