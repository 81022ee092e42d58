use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::modules::{
    cg_parallel_layer, g_cnn_module, plain_module, BranchModule, ConvParams, CrossGateModule, GateModule,
};
use super::{Architecture, NetworkSpec};
use crate::autodiff::{ConvSpec, Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::dsp::FeatureMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParallelLayer {
    pub a: BranchModule,
    pub b: Option<BranchModule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Head {
    conv: ConvParams,
    fc: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

/// Labeled shapes of every intermediate map, in forward order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShapeTrace {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    fn push(&mut self, label: impl Into<String>, shape: &[usize]) {
        self.entries.push((label.into(), shape.to_vec()));
    }

    pub fn get(&self, label: &str) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, s)| s.as_slice())
    }
}

pub struct ForwardOutput {
    pub logits: NodeId,
    pub fusion: NodeId,
    /// Gate maps of every gated module, layer by layer, branch a first.
    pub gates: Vec<NodeId>,
    pub trace: ShapeTrace,
}

/// A network instance: spec, parameters and the wiring between them.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub params: ParamStore,
    layers: Vec<ParallelLayer>,
    head: Head,
}

struct Builder<'a> {
    params: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    /// Weights uniform in `+-sqrt(6 / fan_in)`, zero biases.
    fn tensor(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> Result<ParamId> {
        let n = shape.iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        let values = (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect();
        self.params.add(name, shape, values)
    }

    fn bias(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.params.add(name, vec![n], vec![0.0; n])
    }

    fn conv(&mut self, prefix: &str, spec: ConvSpec) -> Result<ConvParams> {
        Ok(ConvParams {
            spec,
            weight: self.tensor(format!("{prefix}.weight"), spec.weight_shape(), spec.fan_in())?,
            bias: self.bias(format!("{prefix}.bias"), spec.out_channels)?,
        })
    }

    fn linear(&mut self, prefix: &str, rows: usize, cols: usize) -> Result<(ParamId, ParamId)> {
        Ok((
            self.tensor(format!("{prefix}.weight"), vec![rows, cols], cols)?,
            self.bias(format!("{prefix}.bias"), rows)?,
        ))
    }
}

impl Network {
    /// Instantiates `spec` with parameters drawn deterministically from `seed`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamStore::new();
        let mut b = Builder {
            params: &mut params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let arch = spec.architecture;
        let mut in_dims = spec.input_dims.clone();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (l, geom) in spec.layers.iter().enumerate() {
            let conv_from = |c_in: usize| ConvSpec::new(c_in, spec.channels, geom.kernel_width, geom.dilation);
            let branch = |b: &mut Builder, tag: &str, own: usize, other: usize| -> Result<BranchModule> {
                let p = format!("layer{}.{tag}", l + 1);
                Ok(match arch {
                    Architecture::CgPcnn => BranchModule::CrossGate(CrossGateModule {
                        main: b.conv(&format!("{p}.main"), conv_from(own))?,
                        gate_self: b.conv(&format!("{p}.gate_self"), conv_from(own))?,
                        gate_cross: b.conv(&format!("{p}.gate_cross"), conv_from(other))?,
                    }),
                    Architecture::GPcnn => BranchModule::Gate(GateModule {
                        main: b.conv(&format!("{p}.main"), conv_from(own))?,
                        gate: b.conv(&format!("{p}.gate_self"), conv_from(own))?,
                    }),
                    Architecture::Pcnn | Architecture::Sfan => {
                        BranchModule::Plain(b.conv(&format!("{p}.main"), conv_from(own))?)
                    }
                })
            };
            let layer = if arch.branches() == 2 {
                let (da, db) = (in_dims[0], in_dims[1]);
                ParallelLayer {
                    a: branch(&mut b, "a", da, db)?,
                    b: Some(branch(&mut b, "b", db, da)?),
                }
            } else {
                ParallelLayer {
                    a: branch(&mut b, "a", in_dims[0], in_dims[0])?,
                    b: None,
                }
            };
            layers.push(layer);
            in_dims.iter_mut().for_each(|d| *d = spec.channels);
        }
        let head = Head {
            conv: b.conv(
                "head.conv",
                ConvSpec::new(spec.fusion_channels(), spec.head_channels, 1, 1),
            )?,
            fc: b.linear("head.fc", spec.embedding_dim, 2 * spec.head_channels)?,
            out: b.linear("head.out", spec.n_speakers, spec.embedding_dim)?,
        };
        Ok(Self {
            spec: spec.clone(),
            params,
            layers,
            head,
        })
    }

    pub fn layers(&self) -> &[ParallelLayer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }

    /// Scalar parameter count of the branch convs in layer `l` (0-based).
    pub fn layer_params(&self, l: usize) -> usize {
        let layer = &self.layers[l];
        let mut convs = layer.a.convs();
        if let Some(b) = &layer.b {
            convs.extend(b.convs());
        }
        convs.iter().map(|c| c.spec.num_params()).sum()
    }

    fn input_node(&self, g: &mut Graph, f: &FeatureMatrix, expected: usize, which: &str) -> Result<NodeId> {
        if f.dim != expected {
            return Err(Error::shape(
                "forward",
                format!("{which} features have {} rows, network expects {expected}", f.dim),
            ));
        }
        Ok(g.input(Tensor::matrix(f.dim, f.frames, f.values.clone())?))
    }

    /// Full forward pass to logits. SFAN takes `b = None`.
    pub fn forward(&self, g: &mut Graph, a: &FeatureMatrix, b: Option<&FeatureMatrix>) -> Result<ForwardOutput> {
        let dims = &self.spec.input_dims;
        let an = self.input_node(g, a, dims[0], "first")?;
        let bn = match (b, dims.get(1)) {
            (Some(f), Some(&d)) => Some(self.input_node(g, f, d, "second")?),
            (None, None) => None,
            (Some(_), None) => {
                return Err(Error::shape("forward", "single-branch network given two feature maps"))
            }
            (None, Some(_)) => return Err(Error::shape("forward", "two-branch network given one feature map")),
        };
        self.forward_nodes(g, an, bn)
    }

    pub fn forward_nodes(&self, g: &mut Graph, a: NodeId, b: Option<NodeId>) -> Result<ForwardOutput> {
        let mut trace = ShapeTrace::default();
        let (ha, hb, gates) = self.branches(g, a, b, &mut trace)?;
        let fusion = match hb {
            Some(hb) => g.concat_rows(ha, hb)?,
            None => ha,
        };
        trace.push("fusion", g.shape(fusion));
        let logits = self.classifier_head_traced(g, fusion, &mut trace)?;
        Ok(ForwardOutput {
            logits,
            fusion,
            gates,
            trace,
        })
    }

    /// Runs the parallel layers only, returning the last layer's branch outputs.
    pub fn branches(
        &self,
        g: &mut Graph,
        mut ha: NodeId,
        mut hb: Option<NodeId>,
        trace: &mut ShapeTrace,
    ) -> Result<(NodeId, Option<NodeId>, Vec<NodeId>)> {
        let store = &self.params;
        let mut gates = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            match (layer.a, layer.b, hb) {
                (BranchModule::CrossGate(left), Some(BranchModule::CrossGate(right)), Some(b_in)) => {
                    let (oa, ob, ga, gb) = cg_parallel_layer(g, store, ha, b_in, &left, &right)?;
                    gates.extend([ga, gb]);
                    ha = oa;
                    hb = Some(ob);
                }
                (a_mod, b_mod, b_in) => {
                    ha = self.single(g, ha, &a_mod, &mut gates)?;
                    if let (Some(m), Some(x)) = (b_mod, b_in) {
                        hb = Some(self.single(g, x, &m, &mut gates)?);
                    }
                    if let Some(x) = hb {
                        if g.shape(x)[1] != g.shape(ha)[1] {
                            return Err(Error::shape("parallel layer", "branch widths differ"));
                        }
                    }
                }
            }
            trace.push(format!("layer{}.a", l + 1), g.shape(ha));
            if let Some(x) = hb {
                trace.push(format!("layer{}.b", l + 1), g.shape(x));
            }
        }
        Ok((ha, hb, gates))
    }

    fn single(&self, g: &mut Graph, h: NodeId, m: &BranchModule, gates: &mut Vec<NodeId>) -> Result<NodeId> {
        match m {
            BranchModule::Plain(c) => plain_module(g, &self.params, h, c),
            BranchModule::Gate(gm) => {
                let (out, gate) = g_cnn_module(g, &self.params, h, gm)?;
                gates.push(gate);
                Ok(out)
            }
            BranchModule::CrossGate(_) => Err(Error::shape("parallel layer", "cross gate needs both branches")),
        }
    }

    /// `relu(conv1x1)`, statistics pooling, `relu(fc)`, output layer.
    pub fn classifier_head(&self, g: &mut Graph, fusion: NodeId) -> Result<NodeId> {
        self.classifier_head_traced(g, fusion, &mut ShapeTrace::default())
    }

    fn classifier_head_traced(&self, g: &mut Graph, fusion: NodeId, trace: &mut ShapeTrace) -> Result<NodeId> {
        let store = &self.params;
        let h = self.head.conv.apply(g, store, fusion)?;
        let h = g.relu(h);
        trace.push("head.conv", g.shape(h));
        let pooled = g.statistics_pool(h)?;
        trace.push("pool", g.shape(pooled));
        let (w, b) = (g.param(store, self.head.fc.0), g.param(store, self.head.fc.1));
        let e = g.linear(pooled, w, b)?;
        let e = g.relu(e);
        trace.push("fc", g.shape(e));
        let (w, b) = (g.param(store, self.head.out.0), g.param(store, self.head.out.1));
        let logits = g.linear(e, w, b)?;
        trace.push("logits", g.shape(logits));
        Ok(logits)
    }

    pub fn logits(&self, a: &FeatureMatrix, b: Option<&FeatureMatrix>) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, a, b)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    /// Index of the largest logit; the first one wins ties.
    pub fn predict(&self, a: &FeatureMatrix, b: Option<&FeatureMatrix>) -> Result<usize> {
        let z = self.logits(a, b)?;
        Ok(argmax(&z))
    }

    /// Replaces parameter values with those of a checkpoint store.
    pub fn load_values(&mut self, store: &ParamStore) -> Result<()> {
        self.params.copy_values_from(store)
    }
}

pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}
