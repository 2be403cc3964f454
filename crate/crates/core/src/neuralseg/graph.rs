use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::ops::{self, Geometry};
use super::tensor::Tensor;
use crate::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Trunk,
    Deconv,
    Fcn,
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub src: NodeId,
    pub param: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Input,
    Conv(ConvSpec),
    /// Transposed convolution. Weights are stored `[in][out][k][k]`.
    Deconv(ConvSpec),
    /// 2×2 stride-2 max pooling that records argmax switches.
    MaxPool {
        src: NodeId,
    },
    /// Places values back at the switches recorded by `pool`.
    Unpool {
        src: NodeId,
        pool: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    /// Two-class softmax over channels; terminal.
    Softmax {
        src: NodeId,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub stream: Stream,
    pub op: Op,
    pub shape: [usize; 3],
}

/// Weights and bias of one convolution, plus momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    /// `[a][b][k][k]`: `a = out, b = in` for convolutions, the reverse for transposed ones.
    pub weight_shape: [usize; 4],
    pub bias_len: usize,
    /// Empty in a layout-only graph.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub vel_w: Vec<f64>,
    pub vel_b: Vec<f64>,
    pub frozen: bool,
    pub stream: Stream,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.weight_shape.iter().product::<usize>() + self.bias_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Heads of the network: softmax nodes over the three score maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heads {
    pub deconv: NodeId,
    pub fcn: NodeId,
    pub fused: NodeId,
}

#[derive(Debug, Clone)]
pub struct NetworkGraph {
    pub input_size: usize,
    pub scale: f64,
    pub nodes: Vec<Node>,
    pub params: Vec<ParamBlock>,
    pub heads: Heads,
    pub trained: bool,
    pub(crate) fault: Fault,
}

/// Deliberate backward-pass corruption used as a negative control for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub(crate) enum Fault {
    #[default]
    None,
    /// Backpropagates through ReLUs as if they were the identity.
    IgnoreRelu,
}

/// Activations of one forward pass plus pooling switches.
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
    pub switches: Vec<Vec<u32>>,
}

/// Per-pixel two-class probabilities of the three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub deconv: Tensor,
    pub fcn: Tensor,
    pub fused: Tensor,
}

/// Gradient buffers aligned with [`NetworkGraph::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &NetworkGraph) -> Self {
        Self {
            weights: net
                .params
                .iter()
                .map(|p| vec![0.0; p.weights.len()])
                .collect(),
            bias: net.params.iter().map(|p| vec![0.0; p.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.bias)
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, v| {
                if v.abs() > m || v.is_nan() {
                    v.abs()
                } else {
                    m
                }
            })
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.bias)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl NetworkGraph {
    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(ParamBlock::len).sum()
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    /// Freezes or unfreezes every parameter block of the FCN stream.
    pub fn set_fcn_frozen(&mut self, frozen: bool) {
        for p in &mut self.params {
            if p.stream == Stream::Fcn {
                p.frozen = frozen;
            }
        }
    }

    fn geometry(
        &self,
        spec: &ConvSpec,
        transposed: bool,
        in_shape: [usize; 3],
        out_shape: [usize; 3],
    ) -> Geometry {
        // `x` is always the larger (pre-convolution) side.
        let (x, y) = if transposed {
            (out_shape, in_shape)
        } else {
            (in_shape, out_shape)
        };
        Geometry {
            y_channels: y[0],
            x_channels: x[0],
            kernel: spec.kernel,
            stride: spec.stride,
            pad: spec.pad,
            x_size: (x[1], x[2]),
            y_size: (y[1], y[2]),
        }
    }

    /// Runs the graph on a `3 × n × n` tensor.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        let expect = self.nodes[0].shape;
        if input.shape() != expect {
            return Err(Error::DimensionMismatch {
                what: "network input",
                expected: expect.iter().product(),
                actual: input.data.len(),
            });
        }
        let n = self.nodes.len();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut switches: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (id, node) in self.nodes.iter().enumerate() {
            let len: usize = node.shape.iter().product();
            let out = match node.op {
                Op::Input => input.data.clone(),
                Op::Conv(spec) | Op::Deconv(spec) => {
                    let transposed = matches!(node.op, Op::Deconv(_));
                    let src = self.nodes[spec.src].shape;
                    let g = self.geometry(&spec, transposed, src, node.shape);
                    let p = &self.params[spec.param];
                    let plane = node.shape[1] * node.shape[2];
                    let mut out = Vec::with_capacity(len);
                    for b in &p.bias {
                        out.extend(core::iter::repeat_n(*b, plane));
                    }
                    if transposed {
                        ops::scatter(&g, &p.weights, &acts[spec.src], &mut out);
                    } else {
                        ops::gather(&g, &p.weights, &acts[spec.src], &mut out);
                    }
                    if spec.relu {
                        // `max` would hide NaN; let it propagate to the gradient check.
                        out.iter_mut().for_each(|v| {
                            if *v < 0.0 {
                                *v = 0.0
                            }
                        });
                    }
                    out
                }
                Op::MaxPool { src } => {
                    let [c, h, w] = self.nodes[src].shape;
                    let mut out = Vec::with_capacity(len);
                    ops::max_pool(&acts[src], c, h, w, &mut out, &mut switches[id]);
                    out
                }
                Op::Unpool { src, pool } => ops::unpool(&acts[src], &switches[pool], len),
                Op::Add { a, b } => acts[a].iter().zip(&acts[b]).map(|(x, y)| x + y).collect(),
                Op::Concat { a, b } => {
                    let mut out = acts[a].clone();
                    out.extend_from_slice(&acts[b]);
                    out
                }
                Op::Softmax { src } => softmax2(&acts[src]),
            };
            debug_assert_eq!(out.len(), len, "node {}", node.name);
            acts.push(out);
        }
        Ok(Trace { acts, switches })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Outputs> {
        let trace = self.forward_trace(input)?;
        Ok(self.outputs(&trace))
    }

    pub fn outputs(&self, trace: &Trace) -> Outputs {
        let t = |id: NodeId| {
            let [c, h, w] = self.nodes[id].shape;
            Tensor {
                channels: c,
                height: h,
                width: w,
                data: trace.acts[id].clone(),
            }
        };
        Outputs {
            deconv: t(self.heads.deconv),
            fcn: t(self.heads.fcn),
            fused: t(self.heads.fused),
        }
    }

    /// Backpropagates the given gradients at node outputs (keyed by node id) and
    /// accumulates parameter gradients into `grads`. Softmax nodes are skipped: the
    /// seeds are expected at their logit sources.
    pub fn backward(&self, trace: &Trace, seeds: Vec<(NodeId, Vec<f64>)>, grads: &mut Grads) {
        let n = self.nodes.len();
        let mut d: Vec<Option<Vec<f64>>> = vec![None; n];
        for (id, g) in seeds {
            accumulate(&mut d[id], &g);
        }
        for id in (1..n).rev() {
            let Some(mut dy) = d[id].take() else { continue };
            let node = &self.nodes[id];
            match node.op {
                Op::Input | Op::Softmax { .. } => {}
                Op::Conv(spec) | Op::Deconv(spec) => {
                    let transposed = matches!(node.op, Op::Deconv(_));
                    if spec.relu && self.fault != Fault::IgnoreRelu {
                        for (g, a) in dy.iter_mut().zip(&trace.acts[id]) {
                            if *a <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    let src = self.nodes[spec.src].shape;
                    let geo = self.geometry(&spec, transposed, src, node.shape);
                    let p = &self.params[spec.param];
                    let plane = node.shape[1] * node.shape[2];
                    if !p.frozen {
                        for (c, b) in grads.bias[spec.param].iter_mut().enumerate() {
                            *b += dy[c * plane..(c + 1) * plane].iter().sum::<f64>();
                        }
                        let x = &trace.acts[spec.src];
                        if transposed {
                            ops::weight_grad(&geo, &dy, x, &mut grads.weights[spec.param]);
                        } else {
                            ops::weight_grad(&geo, x, &dy, &mut grads.weights[spec.param]);
                        }
                    }
                    if spec.src == 0 {
                        continue;
                    }
                    let mut dx = vec![0.0; src.iter().product()];
                    if transposed {
                        ops::gather(&geo, &p.weights, &dy, &mut dx);
                    } else {
                        ops::scatter(&geo, &p.weights, &dy, &mut dx);
                    }
                    accumulate(&mut d[spec.src], &dx);
                }
                Op::MaxPool { src } => {
                    let mut dx = vec![0.0; self.nodes[src].shape.iter().product()];
                    for (g, &s) in dy.iter().zip(&trace.switches[id]) {
                        dx[s as usize] += g;
                    }
                    accumulate(&mut d[src], &dx);
                }
                Op::Unpool { src, pool } => {
                    let dx: Vec<f64> = trace.switches[pool]
                        .iter()
                        .map(|&s| dy[s as usize])
                        .collect();
                    accumulate(&mut d[src], &dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut d[a], &dy);
                    accumulate(&mut d[b], &dy);
                }
                Op::Concat { a, b } => {
                    let na: usize = self.nodes[a].shape.iter().product();
                    accumulate(&mut d[a], &dy[..na]);
                    accumulate(&mut d[b], &dy[na..]);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(v) => v.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

/// Channel-wise softmax of a 2-channel buffer.
pub(crate) fn softmax2(logits: &[f64]) -> Vec<f64> {
    let n = logits.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for i in 0..n {
        let (a, b) = (logits[i], logits[n + i]);
        out[i] = sigmoid(a - b);
        out[n + i] = sigmoid(b - a);
    }
    out
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
