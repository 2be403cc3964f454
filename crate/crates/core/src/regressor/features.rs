use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};

use crate::image::{clamp_pixel, BinaryMask, GrayImage};
use crate::rng::Rng;
use crate::{Error, Result};

/// Standard deviation of the unit-square feature distribution.
pub const FEATURE_SIGMA: f64 = 0.25;

/// A feature point stored in the barycentric frame of one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub triangle: u32,
    pub weights: [f64; 3],
}

/// Shape-indexed feature points over a triangulation of the landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePointSet {
    pub triangles: Vec<[u32; 3]>,
    pub points: Vec<FeaturePoint>,
}

/// Delaunay triangulation of a 2D point set, as landmark index triples.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Vec<[u32; 3]>> {
    if points.len() < 3 {
        return Err(Error::DegenerateTriangulation("fewer than three points"));
    }
    let pts: Vec<delaunator::Point> = points
        .iter()
        .map(|p| delaunator::Point { x: p[0], y: p[1] })
        .collect();
    let t = delaunator::triangulate(&pts);
    if t.triangles.is_empty() {
        return Err(Error::DegenerateTriangulation("all points are collinear"));
    }
    Ok(t.triangles
        .chunks_exact(3)
        .map(|c| [c[0] as u32, c[1] as u32, c[2] as u32])
        .collect())
}

fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Option<[f64; 3]> {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    if det.abs() < 1e-300 {
        return None;
    }
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    Some([l0, l1, 1.0 - l0 - l1])
}

fn segment_distance2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [p[0] - a[0] - t * ab[0], p[1] - a[1] - t * ab[1]];
    d[0] * d[0] + d[1] * d[1]
}

impl FeaturePointSet {
    /// Encodes `p` in the triangle containing it, or, outside the hull, in
    /// the nearest triangle with extrapolated (possibly negative) weights.
    pub fn encode(
        p: [f64; 2],
        vertices: &[[f64; 2]],
        triangles: &[[u32; 3]],
    ) -> Result<FeaturePoint> {
        let mut nearest: Option<(f64, usize, [f64; 3])> = None;
        for (k, t) in triangles.iter().enumerate() {
            let (a, b, c) = (
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            );
            let Some(w) = barycentric(p, a, b, c) else {
                continue;
            };
            if w.iter().all(|&v| v >= -1e-12) {
                return Ok(FeaturePoint {
                    triangle: k as u32,
                    weights: w,
                });
            }
            let d = segment_distance2(p, a, b)
                .min(segment_distance2(p, b, c))
                .min(segment_distance2(p, c, a));
            if nearest.is_none_or(|(best, _, _)| d < best) {
                nearest = Some((d, k, w));
            }
        }
        let (_, k, w) = nearest.ok_or(Error::DegenerateTriangulation("no usable triangle"))?;
        Ok(FeaturePoint {
            triangle: k as u32,
            weights: w,
        })
    }

    pub fn from_points(points: &[[f64; 2]], vertices: &[[f64; 2]]) -> Result<Self> {
        let triangles = triangulate(vertices)?;
        let points = points
            .iter()
            .map(|&p| Self::encode(p, vertices, &triangles))
            .collect::<Result<_>>()?;
        Ok(Self { triangles, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Positions of every point with `vertices` as the triangle corners.
    pub fn decode(&self, vertices: &[[f64; 2]]) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.points.len());
        self.decode_into(vertices, &mut out);
        out
    }

    pub fn decode_into(&self, vertices: &[[f64; 2]], out: &mut Vec<[f64; 2]>) {
        out.clear();
        out.extend(self.points.iter().map(|fp| {
            let t = self.triangles[fp.triangle as usize];
            let mut q = [0.0; 2];
            for (w, &v) in fp.weights.iter().zip(&t) {
                q[0] += w * vertices[v as usize][0];
                q[1] += w * vertices[v as usize][1];
            }
            q
        }));
    }
}

/// Draws `count` points from `N(0.5, σ²)` per axis, truncated to the unit
/// square, and encodes them over the Delaunay triangulation of `mean_landmarks`.
pub fn sample_feature_points(
    mean_landmarks: &[[f64; 2]],
    count: usize,
    rng: &mut Rng,
) -> Result<FeaturePointSet> {
    sample_feature_points_with(mean_landmarks, count, FEATURE_SIGMA, rng)
}

pub fn sample_feature_points_with(
    mean_landmarks: &[[f64; 2]],
    count: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Result<FeaturePointSet> {
    let normal =
        Normal::new(0.5, sigma).map_err(|_| Error::invalid("feature sigma must be positive"))?;
    let mut draw = || loop {
        let v: f64 = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    };
    let pts: Vec<[f64; 2]> = (0..count).map(|_| [draw(), draw()]).collect();
    FeaturePointSet::from_points(&pts, mean_landmarks)
}

/// Nearest-pixel intensities at `coords`, clamped to the border. Pixels
/// outside the face region of `mask` read 0.
pub fn extract_features(
    image: &GrayImage,
    mask: Option<&BinaryMask>,
    coords: &[[f64; 2]],
) -> Vec<f64> {
    let (w, h) = image.dims();
    coords
        .iter()
        .map(|c| {
            let (x, y) = clamp_pixel(c[0], c[1], w, h);
            if mask.is_none_or(|m| m.get(x, y)) {
                image.get(x, y)
            } else {
                0.0
            }
        })
        .collect()
}
