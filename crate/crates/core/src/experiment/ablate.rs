use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{features_label, TrainConfig};
use super::dataset::{feature_path, speakers_of, Dataset};
use super::train::{train_on, RunResult};
use crate::corpus::{split_manifest, UtteranceRecord};
use crate::dsp::{read_features, FeatureMatrix};
use crate::model::Architecture;
use crate::{Error, Result};

/// One row of the per-run results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub network: String,
    pub features: String,
    pub seed: u64,
    pub train_srr: f64,
    pub test_srr: f64,
    pub seconds: f64,
}

impl From<&RunResult> for ResultRow {
    fn from(r: &RunResult) -> Self {
        Self {
            network: r.architecture.label().to_string(),
            features: features_label(&r.feature_pair),
            seed: r.seed,
            train_srr: r.train_accuracy,
            test_srr: r.test_accuracy.unwrap_or(f64::NAN),
            seconds: r.seconds,
        }
    }
}

/// One row of the summary CSV: mean and population STD of test SRR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub network: String,
    pub features: String,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows by (network, features) in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<((String, String), Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.network.clone(), r.features.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.test_srr),
            None => groups.push((key, vec![r.test_srr])),
        }
    }
    groups
        .into_iter()
        .map(|((network, features), v)| {
            let (mean, std) = mean_std(&v);
            SummaryRow {
                network,
                features,
                mean,
                std,
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_csv(path, rows, &["network", "features", "seed", "train_srr", "test_srr", "seconds"])
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, rows, &["network", "features", "mean", "std"])
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Feature dimensions used by `arch` for a requested pair. SFAN takes only
/// the second (finer) dimension of a pair.
pub fn dims_for(arch: Architecture, pair: &[usize]) -> Vec<usize> {
    match (arch.branches(), pair.len()) {
        (1, n) if n > 1 => vec![pair[n - 1]],
        _ => pair.to_vec(),
    }
}

/// The cell configurations of an ablation: every architecture, feature
/// pair and seed `base.seed .. base.seed + n_seeds`.
pub fn ablation_cells(
    base: &TrainConfig,
    architectures: &[Architecture],
    feature_pairs: &[Vec<usize>],
    n_seeds: usize,
) -> Result<Vec<TrainConfig>> {
    if n_seeds < 2 {
        return Err(Error::Config("an ablation needs at least 2 seeds".into()));
    }
    let mut cells = Vec::new();
    for &architecture in architectures {
        for pair in feature_pairs {
            for k in 0..n_seeds as u64 {
                let cfg = TrainConfig {
                    architecture,
                    feature_pair: dims_for(architecture, pair),
                    seed: base.seed + k,
                    ..base.clone()
                };
                cfg.validate()?;
                cells.push(cfg);
            }
        }
    }
    Ok(cells)
}

/// Runs every cell with the given runner, in order.
pub fn run_cells<F>(cells: &[TrainConfig], mut run: F) -> Result<Vec<RunResult>>
where
    F: FnMut(&TrainConfig) -> Result<RunResult>,
{
    cells.iter().map(|c| run(c)).collect()
}

/// In-memory feature cache shared by all ablation cells.
pub struct FeatureCache {
    maps: HashMap<(String, usize), FeatureMatrix>,
}

impl FeatureCache {
    pub fn load(records: &[UtteranceRecord], dims: &[usize], dir: &Path) -> Result<Self> {
        let mut maps = HashMap::new();
        for r in records {
            for &m in dims {
                maps.insert((r.id.clone(), m), read_features(feature_path(dir, &r.id, m))?);
            }
        }
        Ok(Self { maps })
    }

    pub fn insert(&mut self, id: &str, m: usize, f: FeatureMatrix) {
        self.maps.insert((id.to_string(), m), f);
    }

    pub fn empty() -> Self {
        Self { maps: HashMap::new() }
    }

    pub fn dataset(&self, records: &[UtteranceRecord], speakers: &[String], dims: &[usize]) -> Result<Dataset> {
        Dataset::from_records(records, speakers, |_, r| {
            dims.iter()
                .map(|&m| {
                    self.maps
                        .get(&(r.id.clone(), m))
                        .cloned()
                        .ok_or_else(|| Error::Mismatch(format!("no {m}-dim features for {}", r.id)))
                })
                .collect()
        })
    }
}

/// Trains one cell after re-splitting the corpus with the cell's seed, so
/// repetitions vary both initialization and the train/test partition.
pub fn run_resplit_cell(
    cfg: &TrainConfig,
    records: &[UtteranceRecord],
    train_per_speaker: usize,
    cache: &FeatureCache,
) -> Result<RunResult> {
    let (train, test) = split_manifest(records, train_per_speaker, cfg.seed)?;
    let speakers = speakers_of(records);
    let train = cache.dataset(&train, &speakers, &cfg.feature_pair)?;
    let test = cache.dataset(&test, &speakers, &cfg.feature_pair)?;
    Ok(train_on(cfg, &train, Some(&test))?.result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(network: &str, seed: u64, test: f64) -> ResultRow {
        ResultRow {
            network: network.into(),
            features: "26+40".into(),
            seed,
            train_srr: 100.0,
            test_srr: test,
            seconds: 1.5,
        }
    }

    #[test]
    fn counting() {
        let base = TrainConfig::new(Architecture::CgPcnn, vec![26, 40]);
        let cells = ablation_cells(&base, &[Architecture::CgPcnn, Architecture::Sfan], &[vec![26, 40]], 3).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[3].feature_pair, [40]);
        assert_eq!(cells.iter().map(|c| c.seed).collect::<Vec<_>>(), [0, 1, 2, 0, 1, 2]);
        assert!(ablation_cells(&base, &[Architecture::Pcnn], &[vec![26, 40]], 1).is_err());

        let rows: Vec<ResultRow> = cells
            .iter()
            .map(|c| row(c.architecture.label(), c.seed, 50.0 + c.seed as f64))
            .collect();
        assert_eq!(summarize(&rows).len(), 2);
    }

    #[test]
    fn population_std() {
        assert_eq!(mean_std(&[87.5; 4]), (87.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((m, s), (5.0, 2.0));
    }

    #[test]
    fn csv_round_trip_and_summary_consistency() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("CG-PCNN", 0, 90.0), row("CG-PCNN", 1, 80.0), row("SFAN", 0, 70.0)];
        let path = dir.path().join("results.csv");
        write_results_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "network,features,seed,train_srr,test_srr,seconds");
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back, rows);

        let summary = summarize(&back);
        assert_eq!(summary[0].mean, 85.0);
        assert_eq!(summary[0].std, 5.0);
        let spath = dir.path().join("summary.csv");
        write_summary_csv(&spath, &summary).unwrap();
        let text = std::fs::read_to_string(&spath).unwrap();
        assert_eq!(text.lines().next().unwrap(), "network,features,mean,std");
        assert_eq!(text.lines().nth(2).unwrap(), "SFAN,26+40,70.0,0.0");

        write_results_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().trim(), "network,features,seed,train_srr,test_srr,seconds");
    }
}
