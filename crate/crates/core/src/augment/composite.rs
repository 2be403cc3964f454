#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;

use crate::image::{bilinear_taps, BinaryMask, GrayImage, RgbImage};
use crate::rng::Rng;
use crate::{Error, Result};

/// `p_bg = scale · R(angle) · p_fg + translation`, in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub angle: f64,
    pub translation: [f64; 2],
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            angle: 0.0,
            translation: [0.0; 2],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation[0],
            self.scale * (s * p[0] + c * p[1]) + self.translation[1],
        ]
    }

    pub fn inverse_apply(&self, q: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let x = (q[0] - self.translation[0]) / self.scale;
        let y = (q[1] - self.translation[1]) / self.scale;
        [c * x + s * y, -s * x + c * y]
    }

    /// Random placement of a `fg` sized layer over a `bg` sized image: scale
    /// in `scale`, any angle, and the layer center anywhere in the image.
    pub fn random(
        rng: &mut Rng,
        fg: (usize, usize),
        bg: (usize, usize),
        scale: (f64, f64),
    ) -> Self {
        let s = rng.random_range(scale.0..=scale.1);
        let angle = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
        let target = [
            rng.random_range(0.0..bg.0 as f64),
            rng.random_range(0.0..bg.1 as f64),
        ];
        let mut t = Similarity {
            scale: s,
            angle,
            translation: [0.0; 2],
        };
        let c = t.apply([fg.0 as f64 * 0.5, fg.1 as f64 * 0.5]);
        t.translation = [target[0] - c[0], target[1] - c[1]];
        t
    }
}

fn gray_bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (x0, x1, fx) = bilinear_taps(x, img.width());
    let (y0, y1, fy) = bilinear_taps(y, img.height());
    let top = img.get(x0, y0) + (img.get(x1, y0) - img.get(x0, y0)) * fx;
    let bottom = img.get(x0, y1) + (img.get(x1, y1) - img.get(x0, y1)) * fx;
    top + (bottom - top) * fy
}

/// Over-composites `fg` with coverage `alpha` onto `bg` after `tf`, clearing
/// the truth mask where the transformed alpha exceeds 0.5. Background pixels
/// whose centers map outside the foreground are untouched. Returns `false`
/// (and leaves everything unchanged) when the layer lands fully outside.
pub fn composite(
    fg: &RgbImage,
    alpha: &GrayImage,
    bg: &mut RgbImage,
    mask: &mut BinaryMask,
    tf: &Similarity,
) -> Result<bool> {
    if fg.dims() != alpha.dims() {
        return Err(Error::invalid("foreground and alpha sizes differ"));
    }
    if bg.dims() != mask.dims() {
        return Err(Error::invalid("background and mask sizes differ"));
    }
    if alpha.as_slice().iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("alpha outside [0, 1]"));
    }
    if !(tf.scale > 0.0) {
        return Err(Error::invalid("similarity scale must be positive"));
    }
    let (fw, fh) = (fg.width() as f64, fg.height() as f64);
    let mut touched = false;
    for y in 0..bg.height() {
        for x in 0..bg.width() {
            let p = tf.inverse_apply([x as f64 + 0.5, y as f64 + 0.5]);
            if !(p[0] >= 0.0 && p[1] >= 0.0 && p[0] < fw && p[1] < fh) {
                continue;
            }
            let a = gray_bilinear(alpha, p[0], p[1]);
            if a <= 0.0 {
                continue;
            }
            touched = true;
            let f = fg.bilinear(p[0], p[1]);
            let b = bg.get(x, y);
            bg.set(
                x,
                y,
                [
                    a * f[0] + (1.0 - a) * b[0],
                    a * f[1] + (1.0 - a) * b[1],
                    a * f[2] + (1.0 - a) * b[2],
                ],
            );
            if a > 0.5 {
                mask.set(x, y, false);
            }
        }
    }
    if !touched {
        log::warn!("composite layer falls outside the background; passing through");
    }
    Ok(touched)
}
