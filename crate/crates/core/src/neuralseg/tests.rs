use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::Rng as _;

use super::graph::Fault;
use super::*;
use crate::image::{BinaryMask, RgbImage};
use crate::rng::seeded;

fn random_input(n: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    let data = (0..3 * n * n)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    Tensor::from_vec(3, n, n, data).unwrap()
}

fn random_mask(n: usize, seed: u64) -> BinaryMask {
    let mut rng = seeded(seed);
    BinaryMask::from_fn(n, n, |_, _| rng.random_bool(0.4))
}

fn toy_net(scale: f64, n: usize, seed: u64) -> NetworkGraph {
    let mut net = build_two_stream_net(scale, n).unwrap();
    net.init_weights(Init::He, &mut seeded(seed));
    // Nonzero biases exercise the bias paths of every check below.
    let mut rng = seeded(seed ^ 0x5eed);
    for p in &mut net.params {
        p.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.1..0.1));
    }
    net
}

#[test]
fn full_scale_shapes() {
    let net = two_stream_layout(1.0, 128).unwrap();
    let side = |name: &str| net.node(name).unwrap().shape;
    for (i, s) in [64, 32, 16, 8, 4].into_iter().enumerate() {
        let sh = side(&alloc::format!("pool{}", i + 1));
        assert_eq!([sh[1], sh[2]], [s, s]);
    }
    assert_eq!(side("pool5"), [512, 4, 4]);
    let fc6 = net.node("fc6").unwrap();
    let Op::Conv(spec) = fc6.op else { panic!() };
    assert_eq!((spec.kernel, fc6.shape), (4, [4096, 1, 1]));
    assert_eq!(side("score_deconv"), [2, 128, 128]);
    assert_eq!(side("up8"), [2, 128, 128]);
    assert_eq!(side("concat"), [4, 128, 128]);
    assert_eq!(side("score_fused"), [2, 128, 128]);
    let trunk_convs = net
        .nodes
        .iter()
        .filter(|n| n.stream == Stream::Trunk && matches!(n.op, Op::Conv(s) if s.kernel == 3))
        .count();
    assert_eq!(trunk_convs, 13);
}

#[test]
fn every_scale_keeps_contract() {
    for scale in [1.0 / 64.0, 1.0 / 16.0, 0.3, 0.5] {
        for n in [32, 64, 128] {
            let net = two_stream_layout(scale, n).unwrap();
            for h in [net.heads.deconv, net.heads.fcn, net.heads.fused] {
                assert_eq!(net.nodes[h].shape, [2, n, n]);
            }
            for (id, node) in net.nodes.iter().enumerate() {
                let deps: Vec<usize> = match node.op {
                    Op::Input => vec![],
                    Op::Conv(s) | Op::Deconv(s) => vec![s.src],
                    Op::MaxPool { src } | Op::Softmax { src } => vec![src],
                    Op::Unpool { src, pool } => {
                        assert!(matches!(net.nodes[pool].op, Op::MaxPool { .. }));
                        assert_eq!(net.nodes[pool].stream, Stream::Trunk);
                        vec![src, pool]
                    }
                    Op::Add { a, b } | Op::Concat { a, b } => vec![a, b],
                };
                assert!(
                    deps.iter().all(|&d| d < id),
                    "graph is topologically ordered"
                );
            }
        }
    }
    assert!(build_two_stream_net(1.0 / 100.0, 128).is_err());
    assert!(build_two_stream_net(0.25, 100).is_err());
}

#[test]
fn parameter_count_matches_hand_count() {
    // Scale 1/16 at 128: widths 4, 8, 16, 32, 32; fc6 is 256 wide with a 4×4 kernel.
    let c = |i: usize, o: usize, k: usize| i * o * k * k + o;
    let trunk = c(3, 4, 3)
        + c(4, 4, 3)
        + c(4, 8, 3)
        + c(8, 8, 3)
        + c(8, 16, 3)
        + 2 * c(16, 16, 3)
        + c(16, 32, 3)
        + 2 * c(32, 32, 3)
        + 3 * c(32, 32, 3)
        + c(32, 256, 4);
    let deconv = c(256, 32, 4)
        + 3 * c(32, 32, 3)
        + 2 * c(32, 32, 3)
        + c(32, 16, 3)
        + 2 * c(16, 16, 3)
        + c(16, 8, 3)
        + c(8, 8, 3)
        + c(8, 4, 3)
        + 2 * c(4, 4, 3)
        + c(4, 2, 1);
    let fcn = c(256, 2, 1)
        + c(2, 2, 4)
        + c(32, 2, 1)
        + c(2, 2, 4)
        + c(32, 2, 1)
        + c(2, 2, 4)
        + c(16, 2, 1)
        + c(2, 2, 16);
    let fusion = c(4, 2, 1);
    assert_eq!(
        trunk,
        112 + 148 + 296 + 584 + 1168 + 2 * 2320 + 4640 + 5 * 9248 + 131_328
    );
    let net = build_two_stream_net(1.0 / 16.0, 128).unwrap();
    assert_eq!(net.parameter_count(), trunk + deconv + fcn + fusion);
    let stored: usize = net
        .params
        .iter()
        .map(|p| p.weights.len() + p.bias.len())
        .sum();
    assert_eq!(stored, net.parameter_count());
    assert_eq!(
        two_stream_layout(1.0 / 16.0, 128)
            .unwrap()
            .parameter_count(),
        net.parameter_count()
    );
}

/// Straight-line evaluation from the textbook definitions, sharing nothing with
/// the production kernels but the topology.
fn naive_forward(net: &NetworkGraph, input: &Tensor) -> Vec<Vec<f64>> {
    let mut acts: Vec<Vec<f64>> = Vec::new();
    let mut argmax: Vec<Vec<usize>> = Vec::new();
    for node in &net.nodes {
        let [oc, oh, ow] = node.shape;
        let mut sw = Vec::new();
        let out = match node.op {
            Op::Input => input.data.clone(),
            Op::Conv(s) => {
                let [ic, ih, iw] = net.nodes[s.src].shape;
                let p = &net.params[s.param];
                let x = &acts[s.src];
                let mut out = vec![0.0; oc * oh * ow];
                for o in 0..oc {
                    for yy in 0..oh {
                        for xx in 0..ow {
                            let mut acc = p.bias[o];
                            for i in 0..ic {
                                for ky in 0..s.kernel {
                                    for kx in 0..s.kernel {
                                        let sy = (yy * s.stride + ky) as isize - s.pad as isize;
                                        let sx = (xx * s.stride + kx) as isize - s.pad as isize;
                                        if sy < 0
                                            || sx < 0
                                            || sy >= ih as isize
                                            || sx >= iw as isize
                                        {
                                            continue;
                                        }
                                        let wv = p.weights
                                            [((o * ic + i) * s.kernel + ky) * s.kernel + kx];
                                        acc += wv * x[(i * ih + sy as usize) * iw + sx as usize];
                                    }
                                }
                            }
                            out[(o * oh + yy) * ow + xx] = if s.relu { acc.max(0.0) } else { acc };
                        }
                    }
                }
                out
            }
            Op::Deconv(s) => {
                let [ic, ih, iw] = net.nodes[s.src].shape;
                let p = &net.params[s.param];
                let x = &acts[s.src];
                let mut out = vec![0.0; oc * oh * ow];
                for o in 0..oc {
                    out[o * oh * ow..(o + 1) * oh * ow]
                        .iter_mut()
                        .for_each(|v| *v = p.bias[o]);
                }
                for i in 0..ic {
                    for yy in 0..ih {
                        for xx in 0..iw {
                            let v = x[(i * ih + yy) * iw + xx];
                            for o in 0..oc {
                                for ky in 0..s.kernel {
                                    for kx in 0..s.kernel {
                                        let ty = (yy * s.stride + ky) as isize - s.pad as isize;
                                        let tx = (xx * s.stride + kx) as isize - s.pad as isize;
                                        if ty < 0
                                            || tx < 0
                                            || ty >= oh as isize
                                            || tx >= ow as isize
                                        {
                                            continue;
                                        }
                                        let wv = p.weights
                                            [((i * oc + o) * s.kernel + ky) * s.kernel + kx];
                                        out[(o * oh + ty as usize) * ow + tx as usize] += wv * v;
                                    }
                                }
                            }
                        }
                    }
                }
                if s.relu {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                out
            }
            Op::MaxPool { src } => {
                let [_, ih, iw] = net.nodes[src].shape;
                let x = &acts[src];
                let mut out = vec![0.0; oc * oh * ow];
                for c in 0..oc {
                    for yy in 0..oh {
                        for xx in 0..ow {
                            let cands = [(0, 0), (0, 1), (1, 0), (1, 1)]
                                .map(|(dy, dx)| (c * ih + 2 * yy + dy) * iw + 2 * xx + dx);
                            let best = cands
                                .into_iter()
                                .reduce(|b, i| if x[i] > x[b] { i } else { b })
                                .unwrap();
                            out[(c * oh + yy) * ow + xx] = x[best];
                            sw.push(best);
                        }
                    }
                }
                out
            }
            Op::Unpool { src, pool } => {
                let mut out = vec![0.0; oc * oh * ow];
                for (v, &i) in acts[src].iter().zip(&argmax[pool]) {
                    out[i] = *v;
                }
                out
            }
            Op::Add { a, b } => acts[a].iter().zip(&acts[b]).map(|(x, y)| x + y).collect(),
            Op::Concat { a, b } => acts[a].iter().chain(&acts[b]).copied().collect(),
            Op::Softmax { src } => {
                let l = &acts[src];
                let n = oh * ow;
                let mut out = vec![0.0; 2 * n];
                for i in 0..n {
                    let m = l[i].max(l[n + i]);
                    let (e0, e1) = ((l[i] - m).exp(), (l[n + i] - m).exp());
                    out[i] = e0 / (e0 + e1);
                    out[n + i] = e1 / (e0 + e1);
                }
                out
            }
        };
        acts.push(out);
        argmax.push(sw);
    }
    acts
}

#[test]
fn forward_matches_straight_line_oracle() {
    for (scale, n, seed) in [
        (1.0 / 64.0, 32, 1u64),
        (1.0 / 32.0, 64, 2),
        (1.0 / 64.0, 64, 3),
    ] {
        let net = toy_net(scale, n, seed);
        let x = random_input(n, seed + 10);
        let trace = net.forward_trace(&x).unwrap();
        let oracle = naive_forward(&net, &x);
        for (id, (a, b)) in trace.acts.iter().zip(&oracle).enumerate() {
            let worst = a
                .iter()
                .zip(b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(
                worst < 1e-10,
                "node {} differs by {worst}",
                net.nodes[id].name
            );
        }
    }
}

#[test]
fn heads_are_distributions() {
    let net = toy_net(1.0 / 16.0, 32, 4);
    let out = net.forward(&random_input(32, 5)).unwrap();
    for t in [&out.deconv, &out.fcn, &out.fused] {
        let n = t.plane();
        for i in 0..n {
            let (a, b) = (t.data[i], t.data[n + i]);
            assert!(a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_fusion_conv_gives_uniform_map() {
    let mut net = toy_net(1.0 / 16.0, 32, 6);
    let fused = net
        .params
        .iter_mut()
        .find(|p| p.name == "score_fused")
        .unwrap();
    fused.weights.iter_mut().for_each(|w| *w = 0.0);
    fused.bias.iter_mut().for_each(|w| *w = 0.0);
    let out = net.forward(&random_input(32, 7)).unwrap();
    assert!(out.fused.data.iter().all(|p| *p == 0.5));
}

#[test]
fn unpool_restores_argmax_positions() {
    let (c, h, w) = (2, 6, 8);
    // Distinct values so every window has a unique maximum.
    let mut rng = seeded(8);
    let mut x: Vec<f64> = (0..c * h * w).map(|i| i as f64).collect();
    for i in (1..x.len()).rev() {
        x.swap(i, rng.random_range(0..=i));
    }
    let (mut pooled, mut sw) = (Vec::new(), Vec::new());
    max_pool(&x, c, h, w, &mut pooled, &mut sw);
    let back = unpool(&pooled, &sw, x.len());
    for (i, v) in back.iter().enumerate() {
        if sw.contains(&(i as u32)) {
            assert_eq!(*v, x[i]);
        } else {
            assert_eq!(*v, 0.0);
        }
    }
    let (mut again, mut sw2) = (Vec::new(), Vec::new());
    max_pool(&back, c, h, w, &mut again, &mut sw2);
    assert_eq!((again, sw2), (pooled, sw));
}

#[test]
fn bilinear_upsampler_interpolates() {
    let k = bilinear_kernel(4);
    assert_eq!(&k[..4], &[0.0625, 0.1875, 0.1875, 0.0625]);
    // A 2× upsampler maps a constant to the same constant away from the border.
    let g = Geometry {
        y_channels: 1,
        x_channels: 1,
        kernel: 4,
        stride: 2,
        pad: 1,
        x_size: (12, 12),
        y_size: (6, 6),
    };
    let mut out = vec![0.0; 144];
    scatter(&g, &k, &[3.0; 36], &mut out);
    for y in 1..11 {
        for x in 1..11 {
            assert!((out[y * 12 + x] - 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_loss_is_two_ln_two() {
    let n = 16;
    let half = Tensor::from_vec(2, n, n, vec![0.5; 2 * n * n]).unwrap();
    let out = Outputs {
        deconv: half.clone(),
        fcn: half.clone(),
        fused: half,
    };
    let l = loss(&out, &random_mask(n, 9), &TrainConfig::default()).unwrap();
    assert!((l - 2.0 * core::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn confident_loss_is_bounded() {
    let n = 8;
    let truth = random_mask(n, 10);
    let mut data = vec![0.0; 2 * n * n];
    for (i, &f) in truth.as_slice().iter().enumerate() {
        data[if f { n * n + i } else { i }] = 1.0;
    }
    let t = Tensor::from_vec(2, n, n, data).unwrap();
    let out = Outputs {
        deconv: t.clone(),
        fcn: t.clone(),
        fused: t,
    };
    let l = loss(&out, &truth, &TrainConfig::default()).unwrap();
    assert!(l <= 3.0 * -(1.0 - PROB_EPS).ln() + 1e-15);
}

#[test]
fn loss_matches_scalar_oracle() {
    let net = toy_net(1.0 / 16.0, 32, 11);
    let x = random_input(32, 12);
    let truth = random_mask(32, 13);
    let cfg = TrainConfig {
        loss_weights: [0.3, 0.7, 1.2],
        ..TrainConfig::default()
    };
    let out = net.forward(&x).unwrap();
    let mut oracle = 0.0;
    for (t, w) in [&out.deconv, &out.fcn, &out.fused]
        .into_iter()
        .zip(cfg.loss_weights)
    {
        let mut s = 0.0;
        for y in 0..32 {
            for xx in 0..32 {
                let c = truth.get(xx, y) as usize;
                s -= t.at(c, y, xx).ln();
            }
        }
        oracle += w * s / 1024.0;
    }
    let l = loss(&out, &truth, &cfg).unwrap();
    assert!((l - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
    // The logit-space training loss agrees away from the clamp.
    let (lt, _) = loss_and_grads(&net, &x, &truth, &cfg).unwrap();
    assert!((lt - oracle).abs() < 1e-9);
    assert!(loss(&out, &random_mask(16, 1), &cfg).is_err());
}

fn constant_grads(net: &NetworkGraph, g: f64) -> Grads {
    let mut grads = Grads::zeros_like(net);
    for v in grads.weights.iter_mut().chain(grads.bias.iter_mut()) {
        v.iter_mut().for_each(|x| *x = g);
    }
    grads
}

#[test]
fn momentum_recurrence() {
    let base = toy_net(1.0 / 64.0, 32, 14);
    let (lr, g) = (0.01, 0.37);
    let grads = constant_grads(&base, g);

    let mut plain = base.clone();
    apply_gradients(&mut plain, &grads, lr, 0.0, 0.0);
    let mut two = base.clone();
    apply_gradients(&mut two, &grads, lr, 0.9, 0.0);
    apply_gradients(&mut two, &grads, lr, 0.9, 0.0);
    for ((p0, p1), p2) in base.params.iter().zip(&plain.params).zip(&two.params) {
        for ((a, b), c) in p0.weights.iter().zip(&p1.weights).zip(&p2.weights) {
            assert!((b - (a - lr * g)).abs() < 1e-15);
            assert!((c - (a - lr * g * 2.9)).abs() < 1e-14);
        }
    }
}

#[test]
fn frozen_blocks_do_not_move() {
    let mut net = toy_net(1.0 / 64.0, 32, 15);
    net.set_fcn_frozen(true);
    let before = net.clone();
    let data = [(random_input(32, 16), random_mask(32, 17))];
    sgd_step(&mut net, &data, &TrainConfig::default()).unwrap();
    for (a, b) in before.params.iter().zip(&net.params) {
        assert_eq!(
            a.weights == b.weights,
            a.stream == Stream::Fcn,
            "{}",
            a.name
        );
    }
}

/// Blocks that can influence `target`, found by walking the graph backwards.
fn ancestors(net: &NetworkGraph, target: NodeId) -> Vec<bool> {
    let mut live = vec![false; net.nodes.len()];
    live[target] = true;
    let mut blocks = vec![false; net.params.len()];
    for id in (0..net.nodes.len()).rev() {
        if !live[id] {
            continue;
        }
        match net.nodes[id].op {
            Op::Input => {}
            Op::Conv(s) | Op::Deconv(s) => {
                blocks[s.param] = true;
                live[s.src] = true;
            }
            Op::MaxPool { src } | Op::Softmax { src } => live[src] = true,
            Op::Unpool { src, pool } => {
                live[src] = true;
                live[pool] = true;
            }
            Op::Add { a, b } | Op::Concat { a, b } => {
                live[a] = true;
                live[b] = true;
            }
        }
    }
    blocks
}

#[test]
fn fused_only_loss_reaches_exactly_the_ancestors() {
    let net = toy_net(1.0 / 32.0, 32, 18);
    let cfg = TrainConfig {
        loss_weights: [0.0, 0.0, 1.0],
        ..TrainConfig::default()
    };
    let (_, g) = loss_and_grads(&net, &random_input(32, 19), &random_mask(32, 20), &cfg).unwrap();
    let reach = ancestors(&net, net.heads.fused);
    for (i, p) in net.params.iter().enumerate() {
        let moved = g.weights[i].iter().chain(&g.bias[i]).any(|v| *v != 0.0);
        if !reach[i] {
            assert!(!moved, "{} is unreachable yet has a gradient", p.name);
        }
    }
    // The concat feeds the fusion conv from both streams, so the FCN stream is
    // reached through the fused loss unless it is frozen.
    let fcn_moved = net
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| p.stream == Stream::Fcn)
        .any(|(i, _)| g.weights[i].iter().any(|v| *v != 0.0));
    assert!(fcn_moved);
}

fn linear_net() -> NetworkGraph {
    // input → 1×1 conv → softmax; the three heads share it.
    let n = 8;
    let nodes = vec![
        Node {
            name: "input".into(),
            stream: Stream::Trunk,
            op: Op::Input,
            shape: [3, n, n],
        },
        Node {
            name: "score".into(),
            stream: Stream::Fusion,
            op: Op::Conv(ConvSpec {
                src: 0,
                param: 0,
                kernel: 1,
                stride: 1,
                pad: 0,
                relu: false,
            }),
            shape: [2, n, n],
        },
        Node {
            name: "prob".into(),
            stream: Stream::Fusion,
            op: Op::Softmax { src: 1 },
            shape: [2, n, n],
        },
    ];
    let mut rng = seeded(21);
    let weights: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    NetworkGraph {
        input_size: n,
        scale: 1.0,
        nodes,
        params: vec![ParamBlock {
            name: "score".into(),
            weight_shape: [2, 3, 1, 1],
            bias_len: 2,
            weights,
            bias: vec![0.1, -0.2],
            vel_w: vec![0.0; 6],
            vel_b: vec![0.0; 2],
            frozen: false,
            stream: Stream::Fusion,
        }],
        heads: Heads {
            deconv: 2,
            fcn: 2,
            fused: 2,
        },
        trained: false,
        fault: Fault::None,
    }
}

#[test]
fn gradient_check_linear_net() {
    let net = linear_net();
    let r = gradient_check(
        &net,
        &random_input(8, 22),
        &random_mask(8, 23),
        &TrainConfig::default(),
        &GradCheckConfig {
            step: 1e-5,
            per_block: 100,
        },
        &mut seeded(24),
    )
    .unwrap();
    assert_eq!((r.checked, r.excluded), (8, 0));
    assert!(r.max_rel_error < 1e-8, "{r:?}");
}

#[test]
fn gradient_check_toy_two_stream() {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..3 {
        let net = toy_net(1.0 / 16.0, 32, 30 + seed);
        let r = gradient_check(
            &net,
            &random_input(32, 40 + seed),
            &random_mask(32, 50 + seed),
            &TrainConfig::default(),
            &GradCheckConfig::default(),
            &mut seeded(60 + seed),
        )
        .unwrap();
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
    assert!(
        checked > 300,
        "only {checked} parameters checked, worst {worst}"
    );
}

#[test]
fn gradient_check_catches_corrupted_backward() {
    let mut net = toy_net(1.0 / 16.0, 32, 70);
    net.fault = Fault::IgnoreRelu;
    let r = gradient_check(
        &net,
        &random_input(32, 71),
        &random_mask(32, 72),
        &TrainConfig::default(),
        &GradCheckConfig::default(),
        &mut seeded(73),
    )
    .unwrap();
    assert!(r.max_rel_error > 1e-2, "{r:?}");
}

#[test]
fn small_training_run_reduces_loss() {
    let mut net = toy_net(1.0 / 16.0, 32, 80);
    let data = blob_dataset(4, 32, 81);
    let cfg = TrainConfig {
        batch_size: 4,
        iterations: 200,
        ..TrainConfig::default()
    };
    let (initial, _) = batch_grads(&net, &data, &cfg).unwrap();
    let report = train(&mut net, &data, &cfg, &mut seeded(82), |_, _| false).unwrap();
    let (fin, _) = batch_grads(&net, &data, &cfg).unwrap();
    assert_eq!(report.iterations, 200);
    assert!(fin < 0.2 * initial, "loss {initial} → {fin}");
}

#[test]
fn non_finite_gradients_abort() {
    let mut net = toy_net(1.0 / 64.0, 32, 83);
    net.params[0].weights[0] = f64::NAN;
    let data = [(random_input(32, 84), random_mask(32, 85))];
    assert!(matches!(
        sgd_step(&mut net, &data, &TrainConfig::default()),
        Err(crate::Error::NonFinite(_))
    ));
    assert!(sgd_step(&mut net, &[], &TrainConfig::default()).is_err());
}

#[test]
fn inference_contract() {
    let crop = RgbImage::filled(128, 128, [90.0, 120.0, 200.0]);
    for scale in [1.0 / 64.0, 1.0 / 16.0] {
        let mut net = toy_net(scale, 128, 86);
        assert_eq!(
            infer_probability_map(&net, &crop),
            Err(crate::Error::Untrained)
        );
        net.trained = true;
        let map = infer_probability_map(&net, &crop).unwrap();
        assert_eq!(map.dims(), (128, 128));
        let out = net.forward(&image_tensor(&crop)).unwrap();
        let n = out.fused.plane();
        for (i, p) in map.as_slice().iter().enumerate() {
            assert_eq!(*p, out.fused.data[n + i]);
            assert!((out.fused.data[i] + p - 1.0).abs() < 1e-12);
        }
    }
    let net = toy_net(1.0 / 64.0, 32, 87);
    assert!(net.forward(&random_input(64, 1)).is_err());
}

#[test]
fn blob_masks_match_pixels() {
    let (img, mask) = blob_sample(64, &mut seeded(88));
    let face = mask.face_count();
    assert!(face > 64 * 64 / 40 && face < 64 * 64 / 2);
    let mean = |want: bool| {
        let v: Vec<f64> = (0..64 * 64)
            .filter(|i| mask.as_slice()[*i] == want)
            .map(|i| img.as_slice()[i].iter().sum::<f64>() / 3.0)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(true) > mean(false) + 60.0);
    assert_eq!(blob_dataset(3, 32, 5), blob_dataset(3, 32, 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scatter_is_adjoint_of_gather(
        k in 1usize..5, s in 1usize..4, p in 0usize..3, yh in 1usize..6, yw in 1usize..6, seed in 0u64..1000,
    ) {
        prop_assume!(p < k);
        let xh = (yh - 1) * s + k;
        let xw = (yw - 1) * s + k;
        prop_assume!(xh > 2 * p && xw > 2 * p);
        let g = Geometry { y_channels: 2, x_channels: 3, kernel: k, stride: s, pad: p, x_size: (xh - 2 * p, xw - 2 * p), y_size: (yh, yw) };
        let mut rng = seeded(seed);
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let w = r(6 * k * k);
        let x = r(3 * g.x_size.0 * g.x_size.1);
        let y = r(2 * yh * yw);
        let mut wx = vec![0.0; y.len()];
        gather(&g, &w, &x, &mut wx);
        let mut wty = vec![0.0; x.len()];
        scatter(&g, &w, &y, &mut wty);
        let lhs: f64 = wx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&wty).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10);
        // ⟨y, W x⟩ is linear in W with gradient weight_grad(x, y).
        let mut dw = vec![0.0; w.len()];
        weight_grad(&g, &x, &y, &mut dw);
        let lw: f64 = dw.iter().zip(&w).map(|(a, b)| a * b).sum();
        prop_assert!((lw - lhs).abs() < 1e-10);
    }
}
