use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;

use super::graph::{Grads, NetworkGraph, Op, Trace};
use super::tensor::Tensor;
use super::train::{backprop_loss, pixel_losses, Neumaier, TrainConfig};
use crate::image::BinaryMask;
use crate::rng::Rng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Parameters sampled from every unfrozen block (all of them when the block is smaller).
    pub per_block: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            per_block: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ReLU or pooling decision flips within `±step`.
    pub excluded: usize,
    /// `(block, index, analytic, central difference)` of the worst parameter.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Which ReLUs are active and where each pool picked its maximum.
fn signature(net: &NetworkGraph, trace: &Trace) -> Vec<u64> {
    let mut bits = Vec::new();
    let mut word = 0u64;
    let mut n = 0;
    let mut push = |b: bool, bits: &mut Vec<u64>| {
        word = (word << 1) | b as u64;
        n += 1;
        if n == 64 {
            bits.push(word);
            word = 0;
            n = 0;
        }
    };
    for (id, node) in net.nodes.iter().enumerate() {
        match node.op {
            Op::Conv(s) | Op::Deconv(s) if s.relu => {
                trace.acts[id]
                    .iter()
                    .for_each(|v| push(*v > 0.0, &mut bits));
            }
            _ => {}
        }
    }
    for sw in &trace.switches {
        bits.extend(sw.iter().map(|&s| s as u64));
    }
    bits.push(word);
    bits
}

/// Weight `idx` of block `b`, continuing into the bias past the weights.
pub(crate) fn param_mut(net: &mut NetworkGraph, b: usize, idx: usize) -> &mut f64 {
    let blk = &mut net.params[b];
    let nw = blk.weights.len();
    if idx < nw {
        &mut blk.weights[idx]
    } else {
        &mut blk.bias[idx - nw]
    }
}

fn eval(
    net: &NetworkGraph,
    input: &Tensor,
    truth: &BinaryMask,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, Vec<u64>)> {
    let trace = net.forward_trace(input)?;
    Ok((
        pixel_losses(net, &trace, truth, cfg),
        signature(net, &trace),
    ))
}

/// Compares backpropagated gradients with central differences on sampled parameters.
///
/// The difference `L(θ + h) − L(θ − h)` is accumulated from per-pixel differences.
///
/// The relative error of one parameter is
/// `|analytic − cd| / max(|analytic|, |cd|, 1e-8)`.
pub fn gradient_check(
    net: &NetworkGraph,
    input: &Tensor,
    truth: &BinaryMask,
    loss_cfg: &TrainConfig,
    cfg: &GradCheckConfig,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let trace = net.forward_trace(input)?;
    let mut grads = Grads::zeros_like(net);
    backprop_loss(net, &trace, truth, loss_cfg, &mut grads)?;
    let base_sig = signature(net, &trace);

    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        excluded: 0,
        worst: None,
    };
    let h = cfg.step;
    for b in 0..net.params.len() {
        if net.params[b].frozen {
            continue;
        }
        let nw = net.params[b].weights.len();
        let total = net.params[b].len();
        let picks: Vec<usize> = if total <= cfg.per_block {
            (0..total).collect()
        } else {
            (0..cfg.per_block)
                .map(|_| rng.random_range(0..total))
                .collect()
        };
        for idx in picks {
            let orig = *param_mut(&mut probe, b, idx);
            *param_mut(&mut probe, b, idx) = orig + h;
            let (lp, sp) = eval(&probe, input, truth, loss_cfg)?;
            *param_mut(&mut probe, b, idx) = orig - h;
            let (lm, sm) = eval(&probe, input, truth, loss_cfg)?;
            *param_mut(&mut probe, b, idx) = orig;
            if sp != base_sig || sm != base_sig {
                report.excluded += 1;
                continue;
            }
            // Differencing pixel by pixel keeps the loss magnitude out of the roundoff.
            let mut diff = Neumaier::default();
            lp.iter().zip(&lm).for_each(|(a, b)| diff.add(a - b));
            let cd = diff.sum() / (2.0 * h);
            let an = if idx < nw {
                grads.weights[b][idx]
            } else {
                grads.bias[b][idx - nw]
            };
            let rel = (an - cd).abs() / an.abs().max(cd.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((b, idx, an, cd));
            }
        }
    }
    Ok(report)
}
