use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand_distr::{Distribution, Normal};

use super::graph::{ConvSpec, Fault, Heads, NetworkGraph, Node, NodeId, Op, ParamBlock, Stream};
use super::ops::{bilinear_kernel, Geometry};
use crate::rng::Rng;
use crate::{Error, Result};

/// VGG-16 convolution widths per block and the number of convolutions in each.
pub const VGG_WIDTHS: [usize; 5] = [64, 128, 256, 512, 512];
pub const VGG_DEPTHS: [usize; 5] = [2, 2, 3, 3, 3];
/// Width of the first dense layer at full scale.
pub const FC6_WIDTH: usize = 4096;

/// Channel count after scaling, never below one.
pub fn scaled(width: usize, scale: f64) -> usize {
    ((width as f64 * scale).round() as usize).max(1)
}

/// Weight initialization rule for convolution layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Zero-mean Gaussian with `sqrt(2 / fan_in)` deviation (`1 / fan_in` before a softmax).
    He,
    /// Zero-mean Gaussian with a fixed deviation.
    Gaussian(f64),
}

struct Builder {
    allocate: bool,
    nodes: Vec<Node>,
    params: Vec<ParamBlock>,
}

impl Builder {
    fn push(&mut self, name: String, stream: Stream, op: Op, shape: [usize; 3]) -> NodeId {
        self.nodes.push(Node {
            name,
            stream,
            op,
            shape,
        });
        self.nodes.len() - 1
    }

    fn shape(&self, id: NodeId) -> [usize; 3] {
        self.nodes[id].shape
    }

    fn param(&mut self, name: &str, stream: Stream, shape: [usize; 4], bias: usize) -> usize {
        let n = if self.allocate {
            shape.iter().product()
        } else {
            0
        };
        let bias_len = bias;
        let bias = if self.allocate { bias } else { 0 };
        self.params.push(ParamBlock {
            name: name.into(),
            weight_shape: shape,
            bias_len,
            weights: vec![0.0; n],
            bias: vec![0.0; bias],
            vel_w: vec![0.0; n],
            vel_b: vec![0.0; bias],
            frozen: false,
            stream,
        });
        self.params.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        stream: Stream,
        src: NodeId,
        out: usize,
        k: usize,
        pad: usize,
        relu: bool,
    ) -> NodeId {
        let [c, h, w] = self.shape(src);
        let oh = Geometry::conv_out(h, k, 1, pad).expect("kernel larger than input");
        let ow = Geometry::conv_out(w, k, 1, pad).expect("kernel larger than input");
        let param = self.param(name, stream, [out, c, k, k], out);
        let spec = ConvSpec {
            src,
            param,
            kernel: k,
            stride: 1,
            pad,
            relu,
        };
        self.push(name.into(), stream, Op::Conv(spec), [out, oh, ow])
    }

    #[allow(clippy::too_many_arguments)]
    fn deconv(
        &mut self,
        name: &str,
        stream: Stream,
        src: NodeId,
        out: usize,
        k: usize,
        stride: usize,
        pad: usize,
        relu: bool,
    ) -> NodeId {
        let [c, h, w] = self.shape(src);
        let oh = Geometry::deconv_out(h, k, stride, pad).expect("padding exceeds output");
        let ow = Geometry::deconv_out(w, k, stride, pad).expect("padding exceeds output");
        let param = self.param(name, stream, [c, out, k, k], out);
        let spec = ConvSpec {
            src,
            param,
            kernel: k,
            stride,
            pad,
            relu,
        };
        self.push(name.into(), stream, Op::Deconv(spec), [out, oh, ow])
    }

    fn pool(&mut self, name: String, src: NodeId) -> NodeId {
        let [c, h, w] = self.shape(src);
        assert!(h % 2 == 0 && w % 2 == 0, "odd size before {name}");
        self.push(name, Stream::Trunk, Op::MaxPool { src }, [c, h / 2, w / 2])
    }

    fn unpool(&mut self, name: String, src: NodeId, pool: NodeId) -> NodeId {
        let pooled = self.shape(pool);
        let before = self.shape(self.pool_src(pool));
        assert_eq!(
            self.shape(src),
            pooled,
            "{name}: input does not match its pool"
        );
        self.push(name, Stream::Deconv, Op::Unpool { src, pool }, before)
    }

    fn pool_src(&self, pool: NodeId) -> NodeId {
        match self.nodes[pool].op {
            Op::MaxPool { src } => src,
            _ => panic!("unpool must reference a max-pool node"),
        }
    }

    fn add(&mut self, name: &str, a: NodeId, b: NodeId) -> NodeId {
        let s = self.shape(a);
        assert_eq!(s, self.shape(b), "{name}: misaligned skip shapes");
        self.push(name.into(), Stream::Fcn, Op::Add { a, b }, s)
    }
}

/// Builds the two-stream network for `input_size × input_size` RGB crops.
///
/// Weights are zero except the bilinear FCN upsamplers; call
/// [`NetworkGraph::init_weights`] before training.
pub fn build_two_stream_net(scale: f64, input_size: usize) -> Result<NetworkGraph> {
    build(scale, input_size, true)
}

/// The same graph with shapes only: no weight buffers are allocated, so full-width
/// layouts can be audited cheaply. Such a graph cannot be run.
pub fn two_stream_layout(scale: f64, input_size: usize) -> Result<NetworkGraph> {
    build(scale, input_size, false)
}

fn build(scale: f64, input_size: usize, allocate: bool) -> Result<NetworkGraph> {
    if !(scale.is_finite() && scale >= 1.0 / 64.0) {
        return Err(Error::invalid(format!(
            "channel scale {scale} is below 1/64"
        )));
    }
    if input_size == 0 || input_size % 32 != 0 {
        return Err(Error::invalid(format!(
            "input size {input_size} is not a positive multiple of 32"
        )));
    }
    let widths = VGG_WIDTHS.map(|w| scaled(w, scale));
    let fc6_width = scaled(FC6_WIDTH, scale);
    let n = input_size;
    let mut b = Builder {
        allocate,
        nodes: Vec::new(),
        params: Vec::new(),
    };
    let input = b.push("input".into(), Stream::Trunk, Op::Input, [3, n, n]);

    // Shared trunk.
    let mut x = input;
    let mut pools = [0; 5];
    for (blk, (&width, &depth)) in widths.iter().zip(&VGG_DEPTHS).enumerate() {
        for j in 0..depth {
            x = b.conv(
                &format!("conv{}_{}", blk + 1, j + 1),
                Stream::Trunk,
                x,
                width,
                3,
                1,
                true,
            );
        }
        x = b.pool(format!("pool{}", blk + 1), x);
        pools[blk] = x;
    }
    let coarse = n / 32;
    assert_eq!(b.shape(x)[1], coarse);
    let fc6 = b.conv("fc6", Stream::Trunk, x, fc6_width, coarse, 0, true);
    assert_eq!(b.shape(fc6), [fc6_width, 1, 1]);

    // Mirrored deconvolution stream.
    let mut y = b.deconv(
        "deconv_fc6",
        Stream::Deconv,
        fc6,
        widths[4],
        coarse,
        1,
        0,
        true,
    );
    for blk in (0..5).rev() {
        y = b.unpool(format!("unpool{}", blk + 1), y, pools[blk]);
        let depth = VGG_DEPTHS[blk];
        for j in (0..depth).rev() {
            let out = if j == 0 && blk > 0 {
                widths[blk - 1]
            } else {
                widths[blk]
            };
            y = b.deconv(
                &format!("deconv{}_{}", blk + 1, j + 1),
                Stream::Deconv,
                y,
                out,
                3,
                1,
                1,
                true,
            );
        }
    }
    let score_deconv = b.conv("score_deconv", Stream::Deconv, y, 2, 1, 0, false);

    // Skip-fusion stream.
    let score_fc6 = b.conv("score_fc6", Stream::Fcn, fc6, 2, 1, 0, false);
    let up_fc6 = b.deconv("up_fc6", Stream::Fcn, score_fc6, 2, coarse, 1, 0, false);
    let score_pool5 = b.conv("score_pool5", Stream::Fcn, pools[4], 2, 1, 0, false);
    let mut f = b.add("fuse_pool5", up_fc6, score_pool5);
    for (blk, name) in [(3usize, "4"), (2, "3")] {
        let up = b.deconv(
            &format!("up2_pool{}", blk + 2),
            Stream::Fcn,
            f,
            2,
            4,
            2,
            1,
            false,
        );
        let score = b.conv(
            &format!("score_pool{name}"),
            Stream::Fcn,
            pools[blk],
            2,
            1,
            0,
            false,
        );
        f = b.add(&format!("fuse_pool{name}"), up, score);
    }
    let score_fcn = b.deconv("up8", Stream::Fcn, f, 2, 16, 8, 4, false);

    // Fusion head.
    let [_, sh, sw] = b.shape(score_fcn);
    assert_eq!(b.shape(score_deconv), [2, n, n], "deconv stream output");
    assert_eq!([sh, sw], [n, n], "fcn stream output");
    let cat = b.push(
        "concat".into(),
        Stream::Fusion,
        Op::Concat {
            a: score_deconv,
            b: score_fcn,
        },
        [4, n, n],
    );
    let fused = b.conv("score_fused", Stream::Fusion, cat, 2, 1, 0, false);
    let heads = Heads {
        deconv: b.push(
            "prob_deconv".into(),
            Stream::Deconv,
            Op::Softmax { src: score_deconv },
            [2, n, n],
        ),
        fcn: b.push(
            "prob_fcn".into(),
            Stream::Fcn,
            Op::Softmax { src: score_fcn },
            [2, n, n],
        ),
        fused: b.push(
            "prob_fused".into(),
            Stream::Fusion,
            Op::Softmax { src: fused },
            [2, n, n],
        ),
    };
    let mut net = NetworkGraph {
        input_size: n,
        scale,
        nodes: b.nodes,
        params: b.params,
        heads,
        trained: false,
        fault: Fault::None,
    };
    if allocate {
        net.set_bilinear_upsamplers();
    }
    Ok(net)
}

impl NetworkGraph {
    fn is_upsampler(&self, param: usize) -> bool {
        self.nodes.iter().any(|n| match n.op {
            Op::Deconv(s) => s.param == param && n.stream == Stream::Fcn && s.stride > 1,
            _ => false,
        })
    }

    fn set_bilinear_upsamplers(&mut self) {
        for i in 0..self.params.len() {
            if !self.is_upsampler(i) {
                continue;
            }
            let p = &mut self.params[i];
            let [a, c, k, _] = p.weight_shape;
            let kernel = bilinear_kernel(k);
            p.weights.iter_mut().for_each(|w| *w = 0.0);
            for ch in 0..a.min(c) {
                let base = (ch * c + ch) * k * k;
                p.weights[base..base + k * k].copy_from_slice(&kernel);
            }
        }
    }

    /// Draws fresh weights, zeroes biases and momentum, and resets the trained flag.
    /// FCN upsamplers restart from bilinear kernels.
    pub fn init_weights(&mut self, init: Init, rng: &mut Rng) {
        for i in 0..self.params.len() {
            let (transposed, spec) = self.owner(i);
            let p = &mut self.params[i];
            let [a, c, k, _] = p.weight_shape;
            // A transposed layer's input fan is its `a` side, thinned by the stride.
            let fan_in = if transposed {
                ((a * k * k) / (spec.stride * spec.stride)).max(1)
            } else {
                c * k * k
            };
            let linear_head = !spec.relu;
            let std = match init {
                Init::He if linear_head => (1.0 / fan_in as f64).sqrt(),
                Init::He => (2.0 / fan_in as f64).sqrt(),
                Init::Gaussian(s) => s,
            };
            let dist = Normal::new(0.0, std).expect("finite deviation");
            p.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
            p.bias.iter_mut().for_each(|b| *b = 0.0);
            p.vel_w.iter_mut().for_each(|v| *v = 0.0);
            p.vel_b.iter_mut().for_each(|v| *v = 0.0);
        }
        self.set_bilinear_upsamplers();
        self.trained = false;
    }

    /// The layer that owns parameter block `param`.
    fn owner(&self, param: usize) -> (bool, ConvSpec) {
        self.nodes
            .iter()
            .find_map(|n| match n.op {
                Op::Conv(s) if s.param == param => Some((false, s)),
                Op::Deconv(s) if s.param == param => Some((true, s)),
                _ => None,
            })
            .expect("every parameter block has an owning layer")
    }
}
