//! Cross-gate parallel CNN and its ablations.

mod modules;
mod network;
mod spec;

pub use modules::{
    cg_parallel_layer, g_cnn_module, plain_module, plain_parallel_layer, BranchModule, ConvParams,
    CrossGateModule, GateModule,
};
pub use network::{ForwardOutput, Network, ParallelLayer, ShapeTrace};
pub use spec::{Architecture, LayerGeometry, NetworkSpec};
