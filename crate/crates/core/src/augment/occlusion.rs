#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::facemodel::{project_bbox, FaceRig};
use crate::image::{BBox, BinaryMask, PixelRect, RgbImage};
use crate::regressor::TrainingSample;
use crate::rng::Rng;
use crate::Result;

/// Side lengths of segmentation occluders, as fractions of the image side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegOcclusionConfig {
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for SegOcclusionConfig {
    fn default() -> Self {
        Self {
            min_fraction: 0.1,
            max_fraction: 0.6,
        }
    }
}

/// Paints `rect` with `color` and clears the truth mask underneath.
pub fn paint_occlusion(
    image: &mut RgbImage,
    mask: &mut BinaryMask,
    rect: PixelRect,
    color: [f64; 3],
) {
    if let Some(r) = rect.clip(image.width(), image.height()) {
        for y in r.y as usize..r.y as usize + r.height {
            for x in r.x as usize..r.x as usize + r.width {
                image.set(x, y, color);
            }
        }
    }
    mask.clear_rect(rect);
}

/// One uniformly colored rectangle at a uniform position, each side uniform
/// in `[min, max]` of the matching image side. Returns the painted rectangle.
pub fn occlusion_rect_segmentation(
    image: &mut RgbImage,
    mask: &mut BinaryMask,
    cfg: &SegOcclusionConfig,
    rng: &mut Rng,
) -> PixelRect {
    let (w, h) = image.dims();
    let side = |rng: &mut Rng, n: usize| {
        let f = rng.random_range(cfg.min_fraction..=cfg.max_fraction);
        ((f * n as f64).round() as usize).clamp(0, n)
    };
    let rw = side(rng, w);
    let rh = side(rng, h);
    let x = rng.random_range(0..=(w - rw)) as i64;
    let y = rng.random_range(0..=(h - rh)) as i64;
    let color = [
        rng.random_range(0.0..=255.0),
        rng.random_range(0.0..=255.0),
        rng.random_range(0.0..=255.0),
    ];
    let rect = PixelRect::new(x, y, rw, rh);
    paint_occlusion(image, mask, rect, color);
    rect
}

/// Occluding box for the regressor, relative to the face bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropConfig {
    /// Largest box side as a fraction of the matching face-box side.
    pub max_coverage: f64,
    /// Center spread as a fraction of the face-box side.
    pub center_sigma: f64,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            max_coverage: 0.8,
            center_sigma: 0.25,
        }
    }
}

/// The occluder for a face box, given its center and per-axis coverage in `[0, 1]`
/// (fractions of `max_coverage`).
pub fn crop_box(face: &BBox, center: [f64; 2], coverage: [f64; 2], max_coverage: f64) -> BBox {
    let hw = 0.5 * coverage[0] * max_coverage * face.width();
    let hh = 0.5 * coverage[1] * max_coverage * face.height();
    BBox {
        min: [center[0] - hw, center[1] - hh],
        max: [center[0] + hw, center[1] + hh],
    }
}

/// Zeroes image and mask at every pixel whose center falls in the half-open
/// box `[min, max)`. A zero-width box touches nothing.
pub fn apply_crop(sample: &mut TrainingSample, b: &BBox) {
    let (w, h) = sample.image.dims();
    let lo = |v: f64| (v - 0.5).ceil().max(0.0) as usize;
    let hi = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
    for y in lo(b.min[1])..hi(b.max[1], h) {
        for x in lo(b.min[0])..hi(b.max[0], w) {
            sample.image.set(x, y, 0.0);
            sample.mask.set(x, y, false);
        }
    }
}

/// A copy of `sample` occluded by a box centered `~ N(face center, σ·face size)`
/// with sides uniform in `(0, max_coverage]` of the face box. The face box is
/// the projected mesh of the target.
pub fn occlusion_crop_regression(
    sample: &TrainingSample,
    rig: &FaceRig,
    cfg: &CropConfig,
    rng: &mut Rng,
) -> Result<TrainingSample> {
    let s = sample.target.to_params(&sample.identity, sample.focal);
    let face = project_bbox(&s, rig, sample.principal(), 0.0)?;
    let c = face.center();
    let draw = |rng: &mut Rng, mean: f64, size: f64| {
        let sd = cfg.center_sigma * size;
        if sd > 0.0 {
            Normal::new(mean, sd).map(|n| n.sample(rng)).unwrap_or(mean)
        } else {
            mean
        }
    };
    let center = [
        draw(rng, c[0], face.width()),
        draw(rng, c[1], face.height()),
    ];
    // (0, 1]: 1 - U[0, 1).
    let coverage = [1.0 - rng.random::<f64>(), 1.0 - rng.random::<f64>()];
    let b = crop_box(&face, center, coverage, cfg.max_coverage);
    let mut out = sample.clone();
    apply_crop(&mut out, &b);
    Ok(out)
}
