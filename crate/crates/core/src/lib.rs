//! Speaker identification from multi-resolution mel filterbank features.
//!
//! The pipeline runs from raw PCM audio to speaker labels:
//!
//! * [`corpus`]: WAV I/O, segmentation, white-noise mixing, a seeded
//!   synthetic speaker corpus and JSON-lines manifests.
//! * [`dsp`]: framing, Hamming window, power spectrum, triangular mel
//!   filter banks, log filterbank energies and cepstral mean normalization.
//! * [`autodiff`]: a small reverse-mode tape over 64-bit maps with the
//!   primitives the networks need, Adam, and a finite-difference checker.
//! * [`model`]: the cross-gate parallel CNN and its ablations (plain
//!   parallel, self-gated parallel, single branch) with a statistics
//!   pooling classifier head.
//! * [`experiment`]: training, evaluation, ablation tables, gradient
//!   checks and the layer shape audit.

pub mod autodiff;
pub mod corpus;
pub mod dsp;
pub mod experiment;
pub mod model;

mod error;

pub use autodiff::{AdamState, Graph, NodeId, ParamId, ParamStore, ParamTensor, Tensor};
pub use corpus::{Split, SynthCorpusConfig, UtteranceRecord, Waveform};
pub use dsp::{FeatureMatrix, FrameConfig, MelFilterBank};
pub use error::{Error, Result};
pub use experiment::{RunResult, TrainConfig};
pub use model::{Architecture, Network, NetworkSpec};
