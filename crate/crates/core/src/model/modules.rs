use crate::autodiff::{ConvSpec, Graph, NodeId, ParamId, ParamStore};
use crate::{Error, Result};

/// A conv layer's geometry and parameter handles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvParams {
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ConvParams {
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv1d(x, w, b, &self.spec)
    }
}

/// Conv whose output is multiplied by the mean of a sigmoid gate on the
/// module's own input and a sigmoid gate on the parallel branch's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossGateModule {
    pub main: ConvParams,
    pub gate_self: ConvParams,
    pub gate_cross: ConvParams,
}

/// Conv multiplied by a sigmoid gate on its own input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateModule {
    pub main: ConvParams,
    pub gate: ConvParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchModule {
    CrossGate(CrossGateModule),
    Gate(GateModule),
    /// Conv followed by ReLU.
    Plain(ConvParams),
}

impl BranchModule {
    pub fn convs(&self) -> Vec<ConvParams> {
        match self {
            Self::CrossGate(m) => vec![m.main, m.gate_self, m.gate_cross],
            Self::Gate(m) => vec![m.main, m.gate],
            Self::Plain(c) => vec![*c],
        }
    }
}

/// Output of one cross-gate module together with its gate map.
fn cross_gate(
    g: &mut Graph,
    store: &ParamStore,
    own: NodeId,
    other: NodeId,
    m: &CrossGateModule,
) -> Result<(NodeId, NodeId)> {
    let a = m.main.apply(g, store, own)?;
    let s_self = m.gate_self.apply(g, store, own)?;
    let s_self = g.sigmoid(s_self);
    let s_cross = m.gate_cross.apply(g, store, other)?;
    let s_cross = g.sigmoid(s_cross);
    let gate = g.mean2(s_self, s_cross)?;
    Ok((g.mul(a, gate)?, gate))
}

fn check_widths(g: &Graph, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
    let (wa, wb) = (g.shape(a).get(1), g.shape(b).get(1));
    if wa != wb {
        return Err(Error::shape(op, format!("branch widths {wa:?} and {wb:?} differ")));
    }
    Ok(())
}

/// One cross-gate parallel layer. Returns `(H_a', H_b', G_a, G_b)`.
pub fn cg_parallel_layer(
    g: &mut Graph,
    store: &ParamStore,
    ha: NodeId,
    hb: NodeId,
    left: &CrossGateModule,
    right: &CrossGateModule,
) -> Result<(NodeId, NodeId, NodeId, NodeId)> {
    check_widths(g, ha, hb, "cg_parallel_layer")?;
    let (out_a, gate_a) = cross_gate(g, store, ha, hb, left)?;
    let (out_b, gate_b) = cross_gate(g, store, hb, ha, right)?;
    Ok((out_a, out_b, gate_a, gate_b))
}

/// `conv(h; main) * sigmoid(conv(h; gate))`. Returns the output and the gate.
pub fn g_cnn_module(g: &mut Graph, store: &ParamStore, h: NodeId, m: &GateModule) -> Result<(NodeId, NodeId)> {
    let a = m.main.apply(g, store, h)?;
    let pre = m.gate.apply(g, store, h)?;
    let gate = g.sigmoid(pre);
    Ok((g.mul(a, gate)?, gate))
}

/// `relu(conv(h))`.
pub fn plain_module(g: &mut Graph, store: &ParamStore, h: NodeId, c: &ConvParams) -> Result<NodeId> {
    let a = c.apply(g, store, h)?;
    Ok(g.relu(a))
}

pub fn plain_parallel_layer(
    g: &mut Graph,
    store: &ParamStore,
    ha: NodeId,
    hb: NodeId,
    left: &ConvParams,
    right: &ConvParams,
) -> Result<(NodeId, NodeId)> {
    check_widths(g, ha, hb, "plain_parallel_layer")?;
    Ok((plain_module(g, store, ha, left)?, plain_module(g, store, hb, right)?))
}
