use alloc::vec::Vec;
use rand::Rng as _;

use crate::image::{BinaryMask, RgbImage};
use crate::rng::Rng;
use crate::{Error, Result};

/// Random scale range and translation (fraction of the output side) of a negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeConfig {
    pub min_scale: f64,
    pub max_scale: f64,
    pub max_shift: f64,
}

impl Default for NegativeConfig {
    fn default() -> Self {
        Self {
            min_scale: 0.8,
            max_scale: 1.25,
            max_shift: 0.2,
        }
    }
}

/// `count` face-free training images: randomly scaled and shifted resamples
/// of images drawn from `pool`, each paired with an all-non-face mask.
pub fn negative_samples(
    pool: &[RgbImage],
    count: usize,
    width: usize,
    height: usize,
    cfg: &NegativeConfig,
    rng: &mut Rng,
) -> Result<Vec<(RgbImage, BinaryMask)>> {
    if pool.is_empty() {
        return Err(Error::Empty("negative sample pool"));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let src = &pool[rng.random_range(0..pool.len())];
        let s = rng.random_range(cfg.min_scale..=cfg.max_scale);
        let dx = rng.random_range(-cfg.max_shift..=cfg.max_shift) * width as f64;
        let dy = rng.random_range(-cfg.max_shift..=cfg.max_shift) * height as f64;
        let sx = src.width() as f64 / width as f64;
        let sy = src.height() as f64 / height as f64;
        let (cx, cy) = (width as f64 * 0.5, height as f64 * 0.5);
        let img = RgbImage::from_fn(width, height, |x, y| {
            let u = (x as f64 + 0.5 - cx - dx) / s + cx;
            let v = (y as f64 + 0.5 - cy - dy) / s + cy;
            src.bilinear(u * sx, v * sy)
        });
        out.push((img, BinaryMask::new(width, height, false)));
    }
    Ok(out)
}

/// Negatives matching the number of positives, as used for balanced fine-tuning.
pub fn balanced_negatives(
    pool: &[RgbImage],
    positives: usize,
    width: usize,
    height: usize,
    cfg: &NegativeConfig,
    rng: &mut Rng,
) -> Result<Vec<(RgbImage, BinaryMask)>> {
    negative_samples(pool, positives, width, height, cfg, rng)
}
