use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One line of a manifest. `path` is stored as written; relative paths are
/// resolved against the manifest's directory by [`UtteranceRecord::audio_path`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub speaker: String,
    pub path: PathBuf,
    pub split: Split,
}

impl UtteranceRecord {
    pub fn audio_path(&self, base: &Path) -> PathBuf {
        if self.path.is_absolute() {
            self.path.clone()
        } else {
            base.join(&self.path)
        }
    }
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[UtteranceRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines manifest, rejecting duplicate ids.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord =
            serde_json::from_str(&line).map_err(|e| Error::Format {
                kind: "manifest",
                path: path.to_owned(),
                reason: format!("line {}: {e}", lineno + 1),
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Format {
                kind: "manifest",
                path: path.to_owned(),
                reason: format!("duplicate utterance id {:?}", record.id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Shuffles each speaker's utterances with `seed` and assigns the first
/// `train_per_speaker` to train, the rest to test. Speakers are visited in
/// sorted order and utterances sorted by id before shuffling, so the result
/// does not depend on input order.
pub fn split_manifest(
    records: &[UtteranceRecord],
    train_per_speaker: usize,
    seed: u64,
) -> Result<(Vec<UtteranceRecord>, Vec<UtteranceRecord>)> {
    let mut by_speaker: BTreeMap<&str, Vec<&UtteranceRecord>> = BTreeMap::new();
    for r in records {
        by_speaker.entry(&r.speaker).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (speaker, mut utts) in by_speaker {
        if utts.len() < train_per_speaker + 1 {
            return Err(Error::TooFewUtterances {
                speaker: speaker.to_owned(),
                available: utts.len(),
                required: train_per_speaker + 1,
            });
        }
        utts.sort_by(|a, b| a.id.cmp(&b.id));
        utts.shuffle(&mut rng);
        for (i, r) in utts.into_iter().enumerate() {
            let mut r = r.clone();
            if i < train_per_speaker {
                r.split = Split::Train;
                train.push(r);
            } else {
                r.split = Split::Test;
                test.push(r);
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(speakers: usize, utts: usize) -> Vec<UtteranceRecord> {
        (0..speakers)
            .flat_map(|s| {
                (0..utts).map(move |u| UtteranceRecord {
                    id: format!("spk{s:02}_u{u:02}"),
                    speaker: format!("spk{s:02}"),
                    path: format!("wav/spk{s:02}_u{u:02}.wav").into(),
                    split: Split::Train,
                })
            })
            .collect()
    }

    fn per_speaker(records: &[UtteranceRecord]) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for r in records {
            *counts.entry(r.speaker.clone()).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn split_counts_are_exact() {
        let records = corpus(8, 10);
        let (train, test) = split_manifest(&records, 5, 1).unwrap();
        assert_eq!((train.len(), test.len()), (40, 40));
        assert!(per_speaker(&train).values().all(|&c| c == 5));
        assert!(per_speaker(&test).values().all(|&c| c == 5));
        assert!(train.iter().all(|r| r.split == Split::Train));
        assert!(test.iter().all(|r| r.split == Split::Test));
        let ids: HashSet<_> = train.iter().map(|r| &r.id).collect();
        assert!(test.iter().all(|r| !ids.contains(&r.id)));
    }

    #[test]
    fn all_but_one_leaves_single_test_utterance() {
        let (_, test) = split_manifest(&corpus(4, 6), 5, 9).unwrap();
        assert!(per_speaker(&test).values().all(|&c| c == 1));
    }

    #[test]
    fn split_is_seeded_and_order_independent() {
        let records = corpus(3, 8);
        let a = split_manifest(&records, 4, 42).unwrap();
        let mut reversed = records.clone();
        reversed.reverse();
        let b = split_manifest(&reversed, 4, 42).unwrap();
        assert_eq!(a, b);
        let c = split_manifest(&records, 4, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_utterances_is_an_error() {
        let err = split_manifest(&corpus(2, 5), 5, 0).unwrap_err();
        assert!(matches!(err, Error::TooFewUtterances { available: 5, required: 6, .. }));
    }

    #[test]
    fn manifest_round_trip_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let records = corpus(2, 3);
        write_manifest(&path, &records).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), records);
        let line = std::fs::read_to_string(&path).unwrap();
        assert!(line.starts_with(r#"{"id":"spk00_u00","speaker":"spk00","path":"wav/spk00_u00.wav","split":"train"}"#));

        let mut dup = records.clone();
        dup.push(records[0].clone());
        write_manifest(&path, &dup).unwrap();
        assert!(matches!(read_manifest(&path), Err(Error::Format { .. })));
    }
}
