use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::dataset::{speakers_of, Dataset};
use crate::autodiff::{AdamState, Graph, ParamStore};
use crate::corpus::read_manifest;
use crate::model::{Architecture, Network, NetworkSpec};
use crate::{Error, Result};

/// Outcome of one training run. Accuracies are speaker recognition rates in
/// percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub architecture: Architecture,
    pub feature_pair: Vec<usize>,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Mean training loss of every epoch.
    pub loss_trace: Vec<f64>,
    pub best_epoch: usize,
    pub seconds: f64,
}

/// Everything needed to rebuild a trained network next to its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: NetworkSpec,
    pub speakers: Vec<String>,
}

impl CheckpointMeta {
    /// Sidecar path: the checkpoint path with `.json` appended.
    pub fn path_for(checkpoint: &Path) -> PathBuf {
        let mut s = checkpoint.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, checkpoint: &Path) -> Result<()> {
        let path = Self::path_for(checkpoint);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let path = Self::path_for(checkpoint);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub struct Trained {
    /// Parameters of the best-loss epoch.
    pub network: Network,
    pub speakers: Vec<String>,
    pub result: RunResult,
}

/// Percentage of examples whose argmax prediction is the true label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot score an empty dataset".into()));
    }
    let mut correct = 0usize;
    for ex in &data.examples {
        if net.predict(&ex.features[0], ex.features.get(1))? == ex.label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / data.len() as f64)
}

/// Trains on in-memory data. Deterministic given `cfg.seed`.
pub fn train_on(cfg: &TrainConfig, train: &Dataset, test: Option<&Dataset>) -> Result<Trained> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(t) = test {
        if t.speakers != train.speakers {
            return Err(Error::Mismatch("train and test speaker lists differ".into()));
        }
    }
    let start = Instant::now();
    let spec = cfg.network_spec(train.speakers.len());
    let mut net = Network::build(&spec, cfg.seed)?;
    let mut adam = AdamState::new(&net.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            net.params.zero_grads();
            for &i in chunk {
                let ex = &train.examples[i];
                let mut g = Graph::new();
                let out = net.forward(&mut g, &ex.features[0], ex.features.get(1))?;
                let loss = g.softmax_cross_entropy(out.logits, ex.label)?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::Divergence { epoch, batch });
                }
                total += value;
                g.backward(loss, &mut net.params)?;
            }
            net.params.scale_grads(1.0 / chunk.len() as f64);
            adam.step(&mut net.params, lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { epoch, batch },
                other => other,
            })?;
        }
        let mean = total / train.len() as f64;
        log::debug!("epoch {epoch} lr {lr:.3e} loss {mean:.6}");
        loss_trace.push(mean);
        if best.as_ref().map_or(true, |(l, _, _)| mean < *l) {
            best = Some((mean, epoch, net.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    net.load_values(&params)?;

    let train_accuracy = accuracy(&net, train)?;
    let test_accuracy = test.map(|t| accuracy(&net, t)).transpose()?;
    Ok(Trained {
        network: net,
        speakers: train.speakers.clone(),
        result: RunResult {
            architecture: cfg.architecture,
            feature_pair: cfg.feature_pair.clone(),
            seed: cfg.seed,
            train_accuracy,
            test_accuracy,
            loss_trace,
            best_epoch,
            seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Trains from manifests and feature files named in `cfg`, then writes the
/// best checkpoint and its sidecar metadata.
pub fn train(cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let train_records = read_manifest(&cfg.train_manifest)?;
    let speakers = speakers_of(&train_records);
    let train = Dataset::load(&train_records, &speakers, &cfg.feature_pair, &cfg.features_dir)?;
    let test = match &cfg.test_manifest {
        Some(p) => Some(Dataset::load(&read_manifest(p)?, &speakers, &cfg.feature_pair, &cfg.features_dir)?),
        None => None,
    };
    let trained = train_on(cfg, &train, test.as_ref())?;
    if !cfg.checkpoint.as_os_str().is_empty() {
        if let Some(dir) = cfg.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        trained.network.params.save_checkpoint(&cfg.checkpoint)?;
        CheckpointMeta {
            spec: trained.network.spec.clone(),
            speakers: trained.speakers.clone(),
        }
        .save(&cfg.checkpoint)?;
    }
    Ok(trained)
}

/// Loads a checkpoint written by [`train`].
pub fn load_network(checkpoint: &Path) -> Result<(Network, Vec<String>)> {
    let meta = CheckpointMeta::load(checkpoint)?;
    let store = ParamStore::load_checkpoint(checkpoint)?;
    let mut net = Network::build(&meta.spec, 0)?;
    net.load_values(&store)?;
    Ok((net, meta.speakers))
}
