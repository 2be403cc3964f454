//! Minimal raster types shared by every module.
//!
//! Pixel `(x, y)` covers the continuous square `[x, x + 1) × [y, y + 1)`, so its
//! center sits at `(x + 0.5, y + 0.5)` and a continuous coordinate maps to the
//! pixel `floor(x), floor(y)`.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Single-channel image with intensities nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Error::check_len("image buffer", width * height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Nearest pixel of a continuous coordinate, clamped to the border.
    #[inline]
    pub fn nearest_clamped(&self, x: f64, y: f64) -> f64 {
        let (px, py) = clamp_pixel(x, y, self.width, self.height);
        self.get(px, py)
    }

    /// Copy with every non-face pixel of `mask` set to zero.
    pub fn masked(&self, mask: &BinaryMask) -> Result<Self> {
        check_same_dims("mask", self.dims(), mask.dims())?;
        let data = self
            .data
            .iter()
            .zip(mask.as_slice())
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Three-channel image, channels in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        Error::check_len("image buffer", width * height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Gray image replicated into all three channels.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            data: gray.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.data
    }

    /// Rec. 601 luma.
    pub fn luma(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }

    /// Bilinear sample at a continuous coordinate, clamped to the border.
    pub fn bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let a = self.get(x0, y0);
        let b = self.get(x1, y0);
        let c = self.get(x0, y1);
        let d = self.get(x1, y1);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bottom - top) * fy;
        }
        out
    }

    /// Bilinear resample of the pixel rectangle `rect` to `width × height`.
    /// Pixels of `rect` outside the image read the clamped border.
    pub fn crop_resize(&self, rect: PixelRect, width: usize, height: usize) -> RgbImage {
        let sx = rect.width as f64 / width as f64;
        let sy = rect.height as f64 / height as f64;
        RgbImage::from_fn(width, height, |x, y| {
            let cx = rect.x as f64 + (x as f64 + 0.5) * sx;
            let cy = rect.y as f64 + (y as f64 + 0.5) * sy;
            self.bilinear(cx, cy)
        })
    }
}

/// Hard face / non-face labeling. `true` is face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, face: bool) -> Self {
        Self {
            width,
            height,
            data: vec![face; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        Error::check_len("mask buffer", width * height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, face: bool) {
        self.data[y * self.width + x] = face;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn face_count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    /// True when every face pixel of `self` is also face in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union of the face labels. Two empty masks score 1.
    pub fn iou(&self, other: &BinaryMask) -> Result<f64> {
        check_same_dims("mask", self.dims(), other.dims())?;
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Clears every pixel inside `rect` (clipped to the mask).
    pub fn clear_rect(&mut self, rect: PixelRect) {
        if let Some(r) = rect.clip(self.width, self.height) {
            for y in r.y as usize..r.y as usize + r.height {
                for x in r.x as usize..r.x as usize + r.width {
                    self.set(x, y, false);
                }
            }
        }
    }
}

/// Integer pixel rectangle; `x`/`y` may lie outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x: i64,
    pub y: i64,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn new(x: i64, y: i64, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x as f64
            && py >= self.y as f64
            && px < (self.x + self.width as i64) as f64
            && py < (self.y + self.height as i64) as f64
    }

    /// Intersection with the `width × height` image, `None` when empty.
    pub fn clip(&self, width: usize, height: usize) -> Option<PixelRect> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.width as i64).min(width as i64);
        let y1 = (self.y + self.height as i64).min(height as i64);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(PixelRect::new(
                x0,
                y0,
                (x1 - x0) as usize,
                (y1 - y0) as usize,
            ))
        }
    }
}

/// Continuous axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    /// Tight bound of a point set, `None` for an empty set.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Option<BBox> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = BBox {
            min: *first,
            max: *first,
        };
        for p in it {
            b.min[0] = b.min[0].min(p[0]);
            b.min[1] = b.min[1].min(p[1]);
            b.max[0] = b.max[0].max(p[0]);
            b.max[1] = b.max[1].max(p[1]);
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    /// Grows width and height by the fraction `margin`, keeping the center.
    pub fn expanded(&self, margin: f64) -> BBox {
        let c = self.center();
        let hw = 0.5 * self.width() * (1.0 + margin);
        let hh = 0.5 * self.height() * (1.0 + margin);
        BBox {
            min: [c[0] - hw, c[1] - hh],
            max: [c[0] + hw, c[1] + hh],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Smallest pixel rectangle covering every pixel the box touches.
    pub fn to_pixel_rect(&self) -> PixelRect {
        let x0 = self.min[0].floor() as i64;
        let y0 = self.min[1].floor() as i64;
        let x1 = self.max[0].floor() as i64 + 1;
        let y1 = self.max[1].floor() as i64 + 1;
        PixelRect::new(x0, y0, (x1 - x0) as usize, (y1 - y0) as usize)
    }
}

#[inline]
pub(crate) fn clamp_pixel(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    let px = if x.is_nan() { 0.0 } else { x.floor() };
    let py = if y.is_nan() { 0.0 } else { y.floor() };
    let px = px.max(0.0).min((width - 1) as f64) as usize;
    let py = py.max(0.0).min((height - 1) as f64) as usize;
    (px, py)
}

/// Pixel-center bilinear taps: `(lower, upper, fraction)` for coordinate `c`.
#[inline]
pub(crate) fn bilinear_taps(c: f64, len: usize) -> (usize, usize, f64) {
    let s = (c - 0.5).max(0.0).min((len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

pub(crate) fn check_same_dims(
    what: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<()> {
    Error::check_len(what, a.0, b.0)?;
    Error::check_len(what, a.1, b.1)
}
