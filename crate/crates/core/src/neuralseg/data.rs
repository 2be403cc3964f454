//! Synthetic blob-segmentation images for exercising the network at toy scale.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::image_tensor;
use super::tensor::Tensor;
use crate::image::{BinaryMask, RgbImage};
use crate::rng::{substream, Rng};

/// A bright textured ellipse on a dark gradient, plus its pixel-center mask.
pub fn blob_sample(size: usize, rng: &mut Rng) -> (RgbImage, BinaryMask) {
    let s = size as f64;
    let cx = rng.random_range(0.3..0.7) * s;
    let cy = rng.random_range(0.3..0.7) * s;
    let ax = rng.random_range(0.15..0.3) * s;
    let ay = rng.random_range(0.15..0.3) * s;
    let th: f64 = rng.random_range(0.0..core::f64::consts::PI);
    let (st, ct) = th.sin_cos();
    let base = rng.random_range(15.0..70.0);
    let grad = [rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0)];
    let tint: [f64; 3] = core::array::from_fn(|_| rng.random_range(0.75..1.0));
    let bright = rng.random_range(150.0..220.0);
    let freq = rng.random_range(0.15..0.4);
    let noise = Normal::new(0.0, 6.0).expect("valid deviation");

    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let u = (ct * dx + st * dy) / ax;
        let v = (-st * dx + ct * dy) / ay;
        u * u + v * v <= 1.0
    };
    let mut pixels = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let face = inside(px, py);
            let v = if face {
                bright + 25.0 * (freq * px).sin() * (freq * py).cos()
            } else {
                base + grad[0] * px / s + grad[1] * py / s
            };
            let n = noise.sample(rng);
            pixels.push(core::array::from_fn(|c| {
                (v * if face { tint[c] } else { 1.0 } + n).clamp(0.0, 255.0)
            }));
            mask.push(face);
        }
    }
    (
        RgbImage::from_vec(size, size, pixels).expect("sized buffer"),
        BinaryMask::from_vec(size, size, mask).expect("sized buffer"),
    )
}

/// `count` blob samples, sample `i` drawn from its own substream of `seed`.
pub fn blob_dataset(count: usize, size: usize, seed: u64) -> Vec<(Tensor, BinaryMask)> {
    (0..count)
        .map(|i| {
            let (img, mask) = blob_sample(size, &mut substream(seed, i as u64));
            (image_tensor(&img), mask)
        })
        .collect()
}
