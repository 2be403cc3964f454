use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;

use super::graph::{sigmoid, Grads, NetworkGraph, Op, Outputs, Trace};
use super::tensor::Tensor;
use crate::image::BinaryMask;
use crate::rng::Rng;
use crate::{Error, Result};

/// Probabilities are clamped into `[EPS, 1 − EPS]` before taking logarithms.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Weights of the deconvolution, FCN and fused cross-entropies.
    pub loss_weights: [f64; 3],
    pub batch_size: usize,
    pub iterations: usize,
    pub finetune_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            loss_weights: [0.5, 0.5, 1.0],
            batch_size: 4,
            iterations: 2000,
            finetune_learning_rate: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.learning_rate, self.finetune_learning_rate];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::invalid(
                "momentum must lie in [0, 1) and weight decay be nonnegative",
            ));
        }
        if self
            .loss_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid("loss weights must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

fn check_truth(t: &Tensor, truth: &BinaryMask) -> Result<()> {
    if (truth.width(), truth.height()) != (t.width, t.height) || t.channels != 2 {
        return Err(Error::DimensionMismatch {
            what: "segmentation truth",
            expected: t.width * t.height,
            actual: truth.width() * truth.height(),
        });
    }
    Ok(())
}

/// Mean per-pixel cross-entropy of a two-channel probability map (channel 1 = face).
pub fn cross_entropy(probs: &Tensor, truth: &BinaryMask) -> Result<f64> {
    check_truth(probs, truth)?;
    let n = probs.plane();
    let total: f64 = truth
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &face)| {
            let p = if face {
                probs.data[n + i]
            } else {
                probs.data[i]
            };
            -p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
        })
        .sum();
    Ok(total / n as f64)
}

/// Weighted sum of the three head cross-entropies.
pub fn loss(outputs: &Outputs, truth: &BinaryMask, cfg: &TrainConfig) -> Result<f64> {
    let [wd, wf, wu] = cfg.loss_weights;
    Ok(wd * cross_entropy(&outputs.deconv, truth)?
        + wf * cross_entropy(&outputs.fcn, truth)?
        + wu * cross_entropy(&outputs.fused, truth)?)
}

/// Compensated summation; keeps the loss accurate enough for finite differences.
#[derive(Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.comp += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `softplus(z) = ln(1 + eᶻ)`, stable for large `|z|`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Cross-entropy of a logit map and its gradient, scaled by `weight`.
fn logit_ce(logits: &[f64], truth: &[bool], weight: f64) -> (f64, Vec<f64>) {
    let n = truth.len();
    let mut grad = vec![0.0; 2 * n];
    let mut total = Neumaier::default();
    let scale = weight / n as f64;
    for (i, &face) in truth.iter().enumerate() {
        let (t, o) = if face { (n + i, i) } else { (i, n + i) };
        let z = logits[o] - logits[t];
        total.add(softplus(z));
        let q = sigmoid(z);
        grad[o] = scale * q;
        grad[t] = -scale * q;
    }
    (weight * total.sum() / n as f64, grad)
}

/// Weighted per-pixel loss terms of every head; they sum to the training loss.
pub(crate) fn pixel_losses(
    net: &NetworkGraph,
    trace: &Trace,
    truth: &BinaryMask,
    cfg: &TrainConfig,
) -> Vec<f64> {
    let h = net.heads;
    let n = truth.as_slice().len();
    let mut out = Vec::with_capacity(3 * n);
    for (head, w) in [h.deconv, h.fcn, h.fused].into_iter().zip(cfg.loss_weights) {
        let Op::Softmax { src } = net.nodes[head].op else {
            unreachable!("heads are softmax nodes")
        };
        let l = &trace.acts[src];
        for (i, &face) in truth.as_slice().iter().enumerate() {
            let (t, o) = if face { (n + i, i) } else { (i, n + i) };
            out.push(w * softplus(l[o] - l[t]) / n as f64);
        }
    }
    out
}

/// Loss and parameter gradients of one sample, computed from the logits.
pub fn loss_and_grads(
    net: &NetworkGraph,
    input: &Tensor,
    truth: &BinaryMask,
    cfg: &TrainConfig,
) -> Result<(f64, Grads)> {
    let trace = net.forward_trace(input)?;
    let mut grads = Grads::zeros_like(net);
    let l = backprop_loss(net, &trace, truth, cfg, &mut grads)?;
    Ok((l, grads))
}

pub(crate) fn backprop_loss(
    net: &NetworkGraph,
    trace: &Trace,
    truth: &BinaryMask,
    cfg: &TrainConfig,
    grads: &mut Grads,
) -> Result<f64> {
    let h = net.heads;
    let mut seeds = Vec::with_capacity(3);
    let mut total = 0.0;
    for (head, w) in [h.deconv, h.fcn, h.fused].into_iter().zip(cfg.loss_weights) {
        let Op::Softmax { src } = net.nodes[head].op else {
            unreachable!("heads are softmax nodes")
        };
        let [_, hh, ww] = net.nodes[src].shape;
        if (truth.width(), truth.height()) != (ww, hh) {
            return Err(Error::DimensionMismatch {
                what: "segmentation truth",
                expected: ww * hh,
                actual: truth.width() * truth.height(),
            });
        }
        if w == 0.0 {
            continue;
        }
        let (l, g) = logit_ce(&trace.acts[src], truth.as_slice(), w);
        total += l;
        seeds.push((src, g));
    }
    net.backward(trace, seeds, grads);
    Ok(total)
}

/// Classic momentum update of every unfrozen block:
/// `v ← μv − lr(g + λθ)`, `θ ← θ + v`.
pub fn apply_gradients(
    net: &mut NetworkGraph,
    grads: &Grads,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for (i, p) in net.params.iter_mut().enumerate() {
        if p.frozen {
            continue;
        }
        let step = |theta: &mut [f64], vel: &mut [f64], g: &[f64]| {
            for ((t, v), g) in theta.iter_mut().zip(vel.iter_mut()).zip(g) {
                *v = momentum * *v - lr * (g + weight_decay * *t);
                *t += *v;
            }
        };
        step(&mut p.weights, &mut p.vel_w, &grads.weights[i]);
        step(&mut p.bias, &mut p.vel_b, &grads.bias[i]);
    }
}

/// Batch-mean gradients; errors when any gradient is non-finite.
pub fn batch_grads(
    net: &NetworkGraph,
    batch: &[(Tensor, BinaryMask)],
    cfg: &TrainConfig,
) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    let mut grads = Grads::zeros_like(net);
    let mut total = 0.0;
    for (x, truth) in batch {
        let trace = net.forward_trace(x)?;
        total += backprop_loss(net, &trace, truth, cfg, &mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    check_finite(net, &grads)?;
    Ok((total * inv, grads))
}

pub(crate) fn check_finite(net: &NetworkGraph, grads: &Grads) -> Result<()> {
    if grads.is_finite() {
        return Ok(());
    }
    let bad = net
        .params
        .iter()
        .zip(grads.weights.iter().zip(&grads.bias))
        .find(|(_, (w, b))| w.iter().chain(b.iter()).any(|v| !v.is_finite()))
        .map(|(p, _)| p.name.as_str())
        .unwrap_or("?");
    log::error!("non-finite gradient in layer {bad}");
    Err(Error::NonFinite("segmentation network gradient"))
}

/// One SGD step on `batch` at the configured learning rate. Returns the batch loss
/// measured before the update.
pub fn sgd_step(
    net: &mut NetworkGraph,
    batch: &[(Tensor, BinaryMask)],
    cfg: &TrainConfig,
) -> Result<f64> {
    sgd_step_at(net, batch, cfg, cfg.learning_rate)
}

pub fn sgd_step_at(
    net: &mut NetworkGraph,
    batch: &[(Tensor, BinaryMask)],
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f64> {
    let (l, grads) = batch_grads(net, batch, cfg)?;
    apply_gradients(net, &grads, lr, cfg.momentum, cfg.weight_decay);
    Ok(l)
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub iterations: usize,
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Runs `cfg.iterations` SGD steps on shuffled mini-batches drawn from `data`.
///
/// `monitor(iteration, net)` runs after every step; returning `true` stops training.
pub fn train(
    net: &mut NetworkGraph,
    data: &[(Tensor, BinaryMask)],
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut monitor: impl FnMut(usize, &NetworkGraph) -> bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("segmentation training set"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut stopped_early = false;
    for it in 0..cfg.iterations {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let l = sgd_step(net, &batch, cfg).map_err(|e| {
            log::error!("segnet training aborted at iteration {it}: {e}");
            e
        })?;
        losses.push(l);
        net.trained = true;
        if monitor(it, net) {
            stopped_early = true;
            break;
        }
    }
    if losses.is_empty() {
        return Err(Error::invalid(format!(
            "{} iterations requested",
            cfg.iterations
        )));
    }
    Ok(TrainReport {
        iterations: losses.len(),
        losses,
        stopped_early,
    })
}
