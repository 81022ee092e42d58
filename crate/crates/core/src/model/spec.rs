use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    /// Two branches; each conv gated by the mean of a self and a cross gate.
    #[serde(rename = "cg-pcnn")]
    CgPcnn,
    /// Two branches of plain conv + ReLU.
    #[serde(rename = "pcnn")]
    Pcnn,
    /// Two branches; each conv gated by its own input only.
    #[serde(rename = "g-pcnn")]
    GPcnn,
    /// One plain conv + ReLU branch, no concatenation.
    #[serde(rename = "sfan")]
    Sfan,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [Self::CgPcnn, Self::Pcnn, Self::GPcnn, Self::Sfan];

    pub fn branches(self) -> usize {
        match self {
            Self::Sfan => 1,
            _ => 2,
        }
    }

    /// Name as printed in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::CgPcnn => "CG-PCNN",
            Self::Pcnn => "PCNN",
            Self::GPcnn => "G-PCNN",
            Self::Sfan => "SFAN",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Self::CgPcnn => "cg-pcnn",
            Self::Pcnn => "pcnn",
            Self::GPcnn => "g-pcnn",
            Self::Sfan => "sfan",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|a| a.slug() == norm || a.label().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGeometry {
    pub kernel_width: usize,
    pub dilation: usize,
}

/// Declarative network description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    /// Filter counts of the input features; one entry for SFAN, two otherwise.
    pub input_dims: Vec<usize>,
    pub layers: Vec<LayerGeometry>,
    /// Output channels of every branch conv.
    pub channels: usize,
    /// Output channels of the 1x1 conv in the classifier.
    pub head_channels: usize,
    /// Width of the fully connected layer after pooling.
    pub embedding_dim: usize,
    pub n_speakers: usize,
}

impl NetworkSpec {
    /// Four parallel layers (kernels 5, 5, 7, 1; dilations 1, 2, 3, 1) with
    /// 256 channels, a 1500-channel 1x1 conv and a 512-wide FC layer.
    pub fn standard(architecture: Architecture, input_dims: &[usize], n_speakers: usize) -> Self {
        Self {
            architecture,
            input_dims: input_dims.to_vec(),
            layers: [(5, 1), (5, 2), (7, 3), (1, 1)]
                .into_iter()
                .map(|(kernel_width, dilation)| LayerGeometry {
                    kernel_width,
                    dilation,
                })
                .collect(),
            channels: 256,
            head_channels: 1500,
            embedding_dim: 512,
            n_speakers,
        }
    }

    /// Same layer geometry with narrower channels.
    pub fn with_widths(mut self, channels: usize, head_channels: usize, embedding_dim: usize) -> Self {
        self.channels = channels;
        self.head_channels = head_channels;
        self.embedding_dim = embedding_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let want = self.architecture.branches();
        if self.input_dims.len() != want {
            return Err(Error::Config(format!(
                "{} takes {want} input feature(s), got {}",
                self.architecture.label(),
                self.input_dims.len()
            )));
        }
        if self.input_dims.contains(&0) {
            return Err(Error::Config("input feature dimensions must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("at least one parallel layer is required".into()));
        }
        if self.layers.iter().any(|l| l.kernel_width == 0 || l.dilation == 0) {
            return Err(Error::Config("kernel widths and dilations must be positive".into()));
        }
        if self.channels == 0 || self.head_channels == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.n_speakers < 2 {
            return Err(Error::Config("need at least two speakers".into()));
        }
        Ok(())
    }

    /// Frames lost across the branch convs.
    pub fn receptive_span(&self) -> usize {
        self.layers.iter().map(|l| l.dilation * (l.kernel_width - 1)).sum()
    }

    /// Smallest input width the network accepts.
    pub fn min_frames(&self) -> usize {
        self.receptive_span() + 1
    }

    pub fn fusion_channels(&self) -> usize {
        self.channels * self.architecture.branches()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn architecture_names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
            assert_eq!(a.label().parse::<Architecture>().unwrap(), a);
        }
        assert!("resnet".parse::<Architecture>().is_err());
        assert_eq!(serde_json::to_string(&Architecture::GPcnn).unwrap(), "\"g-pcnn\"");
    }

    #[test]
    fn standard_geometry() {
        let s = NetworkSpec::standard(Architecture::CgPcnn, &[26, 40], 100);
        s.validate().unwrap();
        assert_eq!(s.receptive_span(), 30);
        assert_eq!(s.fusion_channels(), 512);
        let sfan = NetworkSpec::standard(Architecture::Sfan, &[40], 100);
        assert_eq!(sfan.fusion_channels(), 256);
        assert!(NetworkSpec::standard(Architecture::Sfan, &[26, 40], 10).validate().is_err());
        assert!(NetworkSpec::standard(Architecture::Pcnn, &[26], 10).validate().is_err());
    }
}
