//! Two-stream segmentation network trained from scratch.
//!
//! A VGG-pattern trunk feeds two decoders: a mirrored stream of unpooling and
//! transposed convolutions, and a skip-fusion stream that upsamples coarse score
//! maps and adds pool-4 and pool-3 scores. Their two-channel scores are
//! concatenated and mixed by a 1×1 convolution. Channel 1 is the face class.

mod arch;
mod data;
mod gradcheck;
mod graph;
mod ops;
mod tensor;
mod train;

#[cfg(test)]
mod tests;

pub use arch::{
    build_two_stream_net, scaled, two_stream_layout, Init, FC6_WIDTH, VGG_DEPTHS, VGG_WIDTHS,
};
pub use data::{blob_dataset, blob_sample};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use graph::{
    ConvSpec, Grads, Heads, NetworkGraph, Node, NodeId, Op, Outputs, ParamBlock, Stream, Trace,
};
pub use ops::{bilinear_kernel, gather, max_pool, scatter, unpool, weight_grad, Geometry};
pub use tensor::Tensor;
pub use train::{
    apply_gradients, batch_grads, cross_entropy, loss, loss_and_grads, sgd_step, sgd_step_at,
    train, TrainConfig, TrainReport, PROB_EPS,
};

use crate::image::RgbImage;
use crate::maskrefine::ProbabilityMap;
use crate::{Error, Result};

/// Intensities are centered at 128 and divided by 64 before entering the trunk.
pub fn image_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = img.dims();
    let mut t = Tensor::zeros(3, h, w);
    for (i, px) in img.as_slice().iter().enumerate() {
        for (c, v) in px.iter().enumerate() {
            t.data[c * w * h + i] = (v - 128.0) / 64.0;
        }
    }
    t
}

/// Face-class probability of the fused head.
pub fn infer_probability_map(net: &NetworkGraph, crop: &RgbImage) -> Result<ProbabilityMap> {
    if !net.trained {
        return Err(Error::Untrained);
    }
    let out = net.forward(&image_tensor(crop))?;
    let n = out.fused.plane();
    ProbabilityMap::new(
        out.fused.width,
        out.fused.height,
        out.fused.data[n..].to_vec(),
    )
}
