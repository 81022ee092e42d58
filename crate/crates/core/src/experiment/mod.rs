//! Training, evaluation, ablation tables, gradient checks and the layer
//! shape audit.

pub mod ablate;
pub mod audit;
mod config;
pub mod dataset;
mod eval;
mod train;

pub use config::{features_label, TrainConfig};
pub use dataset::{Dataset, Example, NoiseSpec};
pub use eval::{evaluate, FeatureSource};
pub use train::{accuracy, load_network, train, train_on, CheckpointMeta, RunResult, Trained};
