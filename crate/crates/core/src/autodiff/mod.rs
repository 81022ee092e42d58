//! Reverse-mode differentiation over small dense maps.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value,
//! and [`Graph::backward`] walks the tape in reverse. Parameters live in a
//! [`ParamStore`] outside the graph and are copied in by [`Graph::param`];
//! their gradients are added back into the store.

mod adam;
mod gradcheck;
mod graph;
mod kernels;
mod param;
mod tensor;

#[cfg(test)]
mod tests;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use graph::{softmax, ConvSpec, Fault, Gradients, Graph, NodeId, POOL_VARIANCE_EPS};
pub use param::{ParamId, ParamStore, ParamTensor};
pub use tensor::Tensor;
