use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::{Architecture, NetworkSpec};
use crate::{Error, Result};

fn default_epochs() -> usize {
    200
}
fn default_lr_start() -> f64 {
    1e-3
}
fn default_lr_end() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    16
}
fn default_channels() -> usize {
    256
}
fn default_head() -> usize {
    1500
}
fn default_embedding() -> usize {
    512
}

/// Training run description. Read from JSON with the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub architecture: Architecture,
    /// `[M1, M2]` for two-branch networks, `[M]` for SFAN.
    pub feature_pair: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr_start")]
    pub lr_start: f64,
    #[serde(default = "default_lr_end")]
    pub lr_end: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train_manifest: PathBuf,
    #[serde(default)]
    pub test_manifest: Option<PathBuf>,
    #[serde(default)]
    pub features_dir: PathBuf,
    #[serde(default)]
    pub checkpoint: PathBuf,
    /// Branch conv channels.
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Channels of the 1x1 fusion conv.
    #[serde(default = "default_head")]
    pub head_channels: usize,
    #[serde(default = "default_embedding")]
    pub embedding_dim: usize,
}

impl TrainConfig {
    pub fn new(architecture: Architecture, feature_pair: Vec<usize>) -> Self {
        Self {
            architecture,
            feature_pair,
            epochs: default_epochs(),
            lr_start: default_lr_start(),
            lr_end: default_lr_end(),
            batch_size: default_batch(),
            seed: 0,
            train_manifest: PathBuf::new(),
            test_manifest: None,
            features_dir: PathBuf::new(),
            checkpoint: PathBuf::new(),
            channels: default_channels(),
            head_channels: default_head(),
            embedding_dim: default_embedding(),
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end && self.lr_start.is_finite()) {
            return Err(Error::Config(format!(
                "need lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        let want = self.architecture.branches();
        if self.feature_pair.len() != want {
            return Err(Error::Config(format!(
                "{} takes {want} feature dimension(s), got {:?}",
                self.architecture.label(),
                self.feature_pair
            )));
        }
        if self.channels == 0 || self.head_channels == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate of epoch `e` (0-based), decaying geometrically from
    /// `lr_start` to `lr_end` over the run.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || epoch == 0 {
            return self.lr_start;
        }
        if epoch + 1 >= self.epochs {
            return self.lr_end;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_start * (self.lr_end / self.lr_start).powf(frac)
    }

    pub fn network_spec(&self, n_speakers: usize) -> NetworkSpec {
        NetworkSpec::standard(self.architecture, &self.feature_pair, n_speakers).with_widths(
            self.channels,
            self.head_channels,
            self.embedding_dim,
        )
    }
}

/// Feature dimensions as printed in result tables, e.g. `26+40`.
pub fn features_label(pair: &[usize]) -> String {
    pair.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+")
}
