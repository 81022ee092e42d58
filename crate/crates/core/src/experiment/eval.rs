use std::path::Path;

use super::dataset::{Dataset, NoiseSpec};
use super::train::{accuracy, load_network};
use crate::corpus::read_manifest;
use crate::{Error, Result};

/// Where evaluation features come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    /// Precomputed feature files.
    Files(&'a Path),
    /// Extract from audio resolved against this directory, optionally noisy.
    Audio { base: &'a Path, noise: Option<NoiseSpec> },
}

/// Speaker recognition rate (percent) of a checkpoint on a manifest.
pub fn evaluate(checkpoint: &Path, manifest: &Path, feature_pair: &[usize], source: FeatureSource) -> Result<f64> {
    let (net, speakers) = load_network(checkpoint)?;
    if net.spec.input_dims != feature_pair {
        return Err(Error::Mismatch(format!(
            "checkpoint expects features {:?}, got {:?}",
            net.spec.input_dims, feature_pair
        )));
    }
    let records = read_manifest(manifest)?;
    let data = match source {
        FeatureSource::Files(dir) => Dataset::load(&records, &speakers, feature_pair, dir)?,
        FeatureSource::Audio { base, noise } => Dataset::from_audio(&records, &speakers, feature_pair, base, noise)?,
    };
    accuracy(&net, &data)
}
