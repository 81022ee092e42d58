use super::kernels::{conv1d_backward, conv1d_forward, dot};
use super::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

/// Guard inside the pooling square root; keeps the gradient finite for
/// constant rows.
pub const POOL_VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Geometry of a 1-D convolution over a `channels x width` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
    pub dilation: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_width: usize, dilation: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_width,
            dilation,
            stride: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel_width == 0 || self.dilation == 0 {
            return Err(Error::Config(format!("conv dimensions must be positive: {self:?}")));
        }
        if self.stride != 1 {
            return Err(Error::Config(format!("only stride 1 is supported, got {}", self.stride)));
        }
        Ok(())
    }

    /// Input frames consumed beyond the first output frame.
    pub fn span(&self) -> usize {
        self.dilation * (self.kernel_width - 1)
    }

    /// `T_in - dilation * (kernel_width - 1)`, or `None` if the input is too short.
    pub fn output_width(&self, t_in: usize) -> Option<usize> {
        t_in.checked_sub(self.span()).filter(|&t| t > 0)
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel_width]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_width
    }

    pub fn num_params(&self) -> usize {
        self.out_channels * self.fan_in() + self.out_channels
    }
}

/// Deliberate backward-pass corruption, used to prove that the gradient
/// checker notices broken derivatives.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    ConvBackwardSignFlip,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dilation: usize,
    },
    Sigmoid(NodeId),
    Relu(NodeId),
    Mul(NodeId, NodeId),
    Mean2(NodeId, NodeId),
    ConcatRows(NodeId, NodeId),
    StatisticsPool(NodeId),
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        label: usize,
        probs: Vec<f64>,
    },
    Sum(NodeId),
    WeightedSum(NodeId, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Forward tape. One graph per forward pass; discard after backward.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

/// Per-node gradients from one reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, NodeId)>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&[f64]> {
        self.grads.get(node.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into `store`, in tape order. Returns how many
    /// parameter nodes received a gradient.
    pub fn accumulate_into(&self, store: &mut ParamStore) -> usize {
        let mut reached = 0;
        for &(pid, node) in &self.params {
            if let Some(g) = &self.grads[node.0] {
                reached += 1;
                for (acc, v) in store.get_mut(pid).grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        reached
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn dims2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        self.value(id)
            .dims2()
            .ok_or_else(|| Error::shape(op, format!("expected a 2-D map, got {:?}", self.shape(id))))
    }

    /// Constant leaf; receives a gradient but updates nothing.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Copies the current values of `id` onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let p = store.get(id);
        let value = Tensor::new(p.shape.clone(), p.values.clone()).expect("store keeps shapes consistent");
        self.push(value, Op::Param(id))
    }

    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, bias: NodeId, spec: &ConvSpec) -> Result<NodeId> {
        spec.validate()?;
        let (c_in, t_in) = self.dims2(input, "conv1d")?;
        if c_in != spec.in_channels {
            return Err(Error::shape(
                "conv1d",
                format!("input has {c_in} channels, layer expects {}", spec.in_channels),
            ));
        }
        if self.shape(weight) != spec.weight_shape().as_slice() || self.shape(bias) != [spec.out_channels] {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "weight {:?} / bias {:?} do not match {:?}",
                    self.shape(weight),
                    self.shape(bias),
                    spec
                ),
            ));
        }
        let t_out = spec.output_width(t_in).ok_or_else(|| {
            Error::shape(
                "conv1d",
                format!("width {t_in} shorter than the kernel span {}", spec.span() + 1),
            )
        })?;
        let mut out = vec![0.0; spec.out_channels * t_out];
        conv1d_forward(
            self.value(input).data(),
            c_in,
            t_in,
            self.value(weight).data(),
            self.value(bias).data(),
            spec.out_channels,
            spec.kernel_width,
            spec.dilation,
            &mut out,
        );
        let value = Tensor::matrix(spec.out_channels, t_out, out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                bias,
                dilation: spec.dilation,
            },
        ))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| sigmoid_scalar(a)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).unwrap();
        self.push(value, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.max(0.0)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).unwrap();
        self.push(value, Op::Relu(x))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "elementwise_mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `(a + b) / 2`.
    pub fn mean2(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mean2")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| 0.5 * (x + y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mean2(a, b)))
    }

    /// Stacks `a` on top of `b`; widths must agree.
    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ra, ca) = self.dims2(a, "concat_rows")?;
        let (rb, cb) = self.dims2(b, "concat_rows")?;
        if ca != cb {
            return Err(Error::shape("concat_rows", format!("widths {ca} and {cb} differ")));
        }
        if ra == 0 || rb == 0 || ca == 0 {
            return Err(Error::shape("concat_rows", "cannot concatenate an empty map"));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::matrix(ra + rb, ca, data)?;
        Ok(self.push(value, Op::ConcatRows(a, b)))
    }

    /// `D x T` map to the `2D` vector of per-row means followed by
    /// per-row population standard deviations.
    pub fn statistics_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let (d, t) = self.dims2(x, "statistics_pool")?;
        if t == 0 {
            return Err(Error::shape("statistics_pool", "zero-width map"));
        }
        let data = self.value(x).data();
        let mut out = vec![0.0; 2 * d];
        for i in 0..d {
            let row = &data[i * t..(i + 1) * t];
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
            out[i] = mean;
            out[d + i] = (var + POOL_VARIANCE_EPS).sqrt();
        }
        Ok(self.push(Tensor::vector(out), Op::StatisticsPool(x)))
    }

    /// `W x + b` for a vector `x`.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let (rows, cols) = self.dims2(weight, "linear")?;
        if x.shape() != [cols] || self.shape(bias) != [rows] {
            return Err(Error::shape(
                "linear",
                format!(
                    "input {:?}, weight {:?}, bias {:?}",
                    x.shape(),
                    self.shape(weight),
                    self.shape(bias)
                ),
            ));
        }
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let out = (0..rows).map(|r| b[r] + dot(&w[r * cols..(r + 1) * cols], x.data())).collect();
        Ok(self.push(Tensor::vector(out), Op::Linear { input, weight, bias }))
    }

    /// `-log softmax(logits)[label]`, as a one-element vector.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if z.shape().len() != 1 {
            return Err(Error::shape("softmax_cross_entropy", "logits must be a vector"));
        }
        if label >= z.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: z.len(),
            });
        }
        let probs = softmax(z.data());
        let max = z.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z.data()[label];
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCrossEntropy { logits, label, probs }))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `sum_i weights[i] * x[i]`; reduces any map to a scalar for checks.
    pub fn weighted_sum(&mut self, x: NodeId, weights: Vec<f64>) -> Result<NodeId> {
        if weights.len() != self.value(x).len() {
            return Err(Error::shape(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), self.value(x).len()),
            ));
        }
        let s = dot(self.value(x).data(), &weights);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, weights)))
    }

    /// Reverse sweep from the scalar `loss`. Nodes are visited in reverse
    /// tape order, so the result is deterministic.
    pub fn gradients(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut params = Vec::new();
        let flip = matches!(self.fault, Some(Fault::ConvBackwardSignFlip));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => params.push((*pid, NodeId(idx))),
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dilation,
                } => {
                    let x = self.value(*input);
                    let (c_in, t_in) = x.dims2().unwrap();
                    let w = self.value(*weight);
                    let (c_out, kernel) = (w.shape()[0], w.shape()[2]);
                    let mut gx = vec![0.0; x.len()];
                    let mut gw = vec![0.0; w.len()];
                    let mut gb = vec![0.0; c_out];
                    conv1d_backward(
                        x.data(),
                        c_in,
                        t_in,
                        w.data(),
                        c_out,
                        kernel,
                        *dilation,
                        &g,
                        &mut gx,
                        &mut gw,
                        &mut gb,
                    );
                    if flip {
                        for v in gx.iter_mut().chain(gw.iter_mut()).chain(gb.iter_mut()) {
                            *v = -*v;
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Sigmoid(x) => {
                    let s = node.value.data();
                    let gx = g.iter().zip(s).map(|(g, s)| g * s * (1.0 - s)).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let xv = self.value(*x).data();
                    let gx = g.iter().zip(xv).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                    let gb = g.iter().zip(av).map(|(g, a)| g * a).collect();
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mean2(a, b) => {
                    let half: Vec<f64> = g.iter().map(|g| 0.5 * g).collect();
                    accumulate(&mut grads, *a, half.clone());
                    accumulate(&mut grads, *b, half);
                }
                Op::ConcatRows(a, b) => {
                    let split = self.value(*a).len();
                    accumulate(&mut grads, *a, g[..split].to_vec());
                    accumulate(&mut grads, *b, g[split..].to_vec());
                }
                Op::StatisticsPool(x) => {
                    let xv = self.value(*x);
                    let (d, t) = xv.dims2().unwrap();
                    let pooled = node.value.data();
                    let mut gx = vec![0.0; xv.len()];
                    let tf = t as f64;
                    for i in 0..d {
                        let (mean, std) = (pooled[i], pooled[d + i]);
                        let (g_mean, g_std) = (g[i], g[d + i]);
                        let row = &xv.data()[i * t..(i + 1) * t];
                        for (o, &v) in gx[i * t..(i + 1) * t].iter_mut().zip(row) {
                            *o = g_mean / tf + g_std * (v - mean) / (tf * std);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Linear { input, weight, bias } => {
                    let x = self.value(*input).data();
                    let w = self.value(*weight);
                    let (rows, cols) = w.dims2().unwrap();
                    let mut gx = vec![0.0; cols];
                    let mut gw = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let wr = &w.data()[r * cols..(r + 1) * cols];
                        super::kernels::axpy(g[r], wr, &mut gx);
                        super::kernels::axpy(g[r], x, &mut gw[r * cols..(r + 1) * cols]);
                    }
                    accumulate(&mut grads, *input, gx);
                    accumulate(&mut grads, *weight, gw);
                    accumulate(&mut grads, *bias, g.clone());
                }
                Op::SoftmaxCrossEntropy { logits, label, probs } => {
                    let mut gz: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                    gz[*label] -= g[0];
                    accumulate(&mut grads, *logits, gz);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![g[0]; n]);
                }
                Op::WeightedSum(x, w) => {
                    accumulate(&mut grads, *x, w.iter().map(|w| w * g[0]).collect());
                }
            }
            grads[idx] = Some(g);
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }

    /// Adds d(loss)/d(param) into every parameter reachable from `loss`.
    /// Gradients accumulate; zero the store between steps.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        if grads.accumulate_into(store) == 0 {
            return Err(Error::DetachedGraph);
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], target: NodeId, g: Vec<f64>) {
    match &mut grads[target.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
