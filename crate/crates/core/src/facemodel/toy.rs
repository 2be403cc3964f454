//! Procedurally generated rigs.
//!
//! A toy rig is a smooth face-like height field over a disc, with localized
//! expression blendshapes and low-frequency identity bases. The generator is
//! seeded; real rigs load through the rig file format instead.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{FaceRig, RigDims, ShapeParams};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// Half width of the toy face in model units.
pub const FACE_HALF_WIDTH: f64 = 0.5;
/// Half height of the toy face in model units.
pub const FACE_HALF_HEIGHT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyRigConfig {
    /// Mesh vertices per side (`V = grid²`).
    pub grid: usize,
    pub expressions: usize,
    pub identities: usize,
    pub landmarks: usize,
    pub seed: u64,
}

impl Default for ToyRigConfig {
    fn default() -> Self {
        Self {
            grid: 21,
            expressions: 8,
            identities: 6,
            landmarks: 73,
            seed: 2016,
        }
    }
}

/// Neutral surface point for grid parameters `(a, b) ∈ [-1, 1]²`.
fn surface(a: f64, b: f64) -> Vector3<f64> {
    // Square-to-disc map keeps the grid topology while rounding the outline.
    let dx = a * (1.0 - 0.5 * b * b).sqrt();
    let dy = b * (1.0 - 0.5 * a * a).sqrt();
    let x = FACE_HALF_WIDTH * dx;
    let y = FACE_HALF_HEIGHT * dy;
    let r2 = (dx * dx + dy * dy).min(1.0);
    let bulge = -0.2 * (1.0 - r2);
    let nose = -0.12 * (-(x * x + (y - 0.05) * (y - 0.05)) / 0.01).exp();
    Vector3::new(x, y, bulge + nose)
}

fn random_unit(rng: &mut Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

pub fn toy_rig(cfg: &ToyRigConfig) -> Result<FaceRig> {
    if cfg.grid < 2 {
        return Err(Error::invalid(
            "toy rig grid needs at least 2 vertices per side",
        ));
    }
    let g = cfg.grid;
    let vcount = g * g;
    if cfg.landmarks > vcount || cfg.landmarks < 2 {
        return Err(Error::invalid("landmark count must be in [2, V]"));
    }
    let mut rng = seeded(cfg.seed);
    let (n, nid) = (cfg.expressions, cfg.identities);

    let mut neutral = Vec::with_capacity(vcount);
    for j in 0..g {
        for i in 0..g {
            let a = -1.0 + 2.0 * i as f64 / (g - 1) as f64;
            let b = -1.0 + 2.0 * j as f64 / (g - 1) as f64;
            neutral.push(surface(a, b));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (g - 1) * (g - 1));
    for j in 0..g - 1 {
        for i in 0..g - 1 {
            let v = j * g + i;
            triangles.push([v, v + 1, v + g]);
            triangles.push([v + 1, v + g + 1, v + g]);
        }
    }

    // Localized expression deltas.
    let mut expr: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(n);
    for _ in 0..n {
        let center = [
            rng.random_range(-0.7..0.7) * FACE_HALF_WIDTH,
            rng.random_range(-0.7..0.7) * FACE_HALF_HEIGHT,
        ];
        let radius: f64 = rng.random_range(0.2..0.35);
        let mut dir = random_unit(&mut rng);
        dir.z *= 0.3;
        let amp = rng.random_range(0.06..0.12) / dir.norm();
        expr.push(
            neutral
                .iter()
                .map(|p| {
                    let d2 = (p.x - center[0]).powi(2) + (p.y - center[1]).powi(2);
                    dir * (amp * (-d2 / (2.0 * radius * radius)).exp())
                })
                .collect(),
        );
    }

    // Identity bases: smooth global fields on the neutral face plus a scaled
    // copy of each blendshape (the third tensor mode).
    let mut core = vec![0.0; 3 * vcount * (n + 1) * (nid + 1)];
    let idx = |row: usize, e: usize, j: usize| (row * (n + 1) + e) * (nid + 1) + j;
    for (v, p) in neutral.iter().enumerate() {
        for c in 0..3 {
            core[idx(3 * v + c, 0, 0)] = p[c];
            for (k, d) in expr.iter().enumerate() {
                core[idx(3 * v + c, k + 1, 0)] = d[v][c];
            }
        }
    }
    for j in 0..nid {
        let freq = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let phase: [f64; 3] = [
            rng.random_range(0.0..6.3),
            rng.random_range(0.0..6.3),
            rng.random_range(0.0..6.3),
        ];
        let amp = [
            rng.random_range(0.01..0.03),
            rng.random_range(0.01..0.03),
            rng.random_range(0.01..0.04),
        ];
        let gains: Vec<f64> = (0..n).map(|_| rng.random_range(-0.2..0.2)).collect();
        for (v, p) in neutral.iter().enumerate() {
            let w = (freq[0] * p.x * 3.0 + phase[0]).sin() * (freq[1] * p.y * 3.0 + phase[1]).cos();
            for c in 0..3 {
                let s = (freq[c % 2] * (p.x + p.y) * 2.0 + phase[c]).cos();
                core[idx(3 * v + c, 0, j + 1)] = amp[c] * (0.6 * w + 0.4 * s);
                for k in 0..n {
                    core[idx(3 * v + c, k + 1, j + 1)] = gains[k] * expr[k][v][c];
                }
            }
        }
    }

    // Landmarks: two eye corners, then farthest-point sampling over vertices
    // kept two rings inside the outline when the grid allows, so every
    // landmark stays clear of the silhouette.
    let ring = |v: usize| {
        let (i, j) = (v % g, v / g);
        i.min(j).min(g - 1 - i).min(g - 1 - j)
    };
    let candidates: Vec<usize> = [2, 1, 0]
        .iter()
        .map(|&r| (0..vcount).filter(|&v| ring(v) >= r).collect::<Vec<_>>())
        .find(|c| c.len() >= cfg.landmarks)
        .expect("the full vertex set holds every landmark");
    let nearest = |target: [f64; 2], taken: &[usize]| -> usize {
        *candidates
            .iter()
            .filter(|v| !taken.contains(v))
            .min_by(|&&a, &&b| {
                let da = (neutral[a].x - target[0]).powi(2) + (neutral[a].y - target[1]).powi(2);
                let db = (neutral[b].x - target[0]).powi(2) + (neutral[b].y - target[1]).powi(2);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .expect("candidate set is nonempty")
    };
    let mut landmarks = Vec::with_capacity(cfg.landmarks);
    let left = nearest(
        [-0.6 * FACE_HALF_WIDTH, -0.25 * FACE_HALF_HEIGHT],
        &landmarks,
    );
    landmarks.push(left);
    let right = nearest(
        [0.6 * FACE_HALF_WIDTH, -0.25 * FACE_HALF_HEIGHT],
        &landmarks,
    );
    landmarks.push(right);
    let mut min_d2: Vec<f64> = candidates
        .iter()
        .map(|&v| {
            landmarks
                .iter()
                .map(|&l| (neutral[v] - neutral[l]).xy().norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    while landmarks.len() < cfg.landmarks {
        let (best, _) = min_d2
            .iter()
            .enumerate()
            .fold(
                (usize::MAX, -1.0),
                |acc, (k, &d)| if d > acc.1 { (k, d) } else { acc },
            );
        let v = candidates[best];
        landmarks.push(v);
        for (k, &c) in candidates.iter().enumerate() {
            let d = (neutral[c] - neutral[v]).xy().norm_squared();
            if d < min_d2[k] {
                min_d2[k] = d;
            }
        }
    }

    let lo = [
        landmarks
            .iter()
            .map(|&v| neutral[v].x)
            .fold(f64::INFINITY, f64::min),
        landmarks
            .iter()
            .map(|&v| neutral[v].y)
            .fold(f64::INFINITY, f64::min),
    ];
    let hi = [
        landmarks
            .iter()
            .map(|&v| neutral[v].x)
            .fold(f64::NEG_INFINITY, f64::max),
        landmarks
            .iter()
            .map(|&v| neutral[v].y)
            .fold(f64::NEG_INFINITY, f64::max),
    ];
    let mean_landmarks = landmarks
        .iter()
        .map(|&v| {
            [
                (neutral[v].x - lo[0]) / (hi[0] - lo[0]).max(1e-12),
                (neutral[v].y - lo[1]) / (hi[1] - lo[1]).max(1e-12),
            ]
        })
        .collect();

    FaceRig::new(
        RigDims {
            vertices: vcount,
            expressions: n,
            identities: nid,
            landmarks: cfg.landmarks,
        },
        core,
        mean_landmarks,
        landmarks,
        triangles,
        [0, 1],
    )
}

/// Camera depth of the toy face used by the generators.
pub const DEFAULT_DEPTH: f64 = 3.0;

/// Focal length that makes the toy face span roughly half of an image of `size` pixels.
pub fn default_focal(size: f64) -> f64 {
    1.6 * size
}

/// A random, in-range state for tests: rotations within ±0.3 rad per axis,
/// small offsets, expression in `[0, 1]` and identity in `[-1, 1]`.
pub fn random_params(rig: &FaceRig, rng: &mut Rng, image_size: f64) -> ShapeParams {
    let rot = UnitQuaternion::from_euler_angles(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
    );
    ShapeParams {
        rotation: rot,
        translation: Vector3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            DEFAULT_DEPTH + rng.random_range(-0.3..0.3),
        ),
        expression: (0..rig.expression_count()).map(|_| rng.random()).collect(),
        displacement: (0..rig.landmark_count())
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect(),
        identity: (0..rig.identity_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        focal: default_focal(image_size) * rng.random_range(0.9..1.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rig_has_expected_shape() {
        let rig = toy_rig(&ToyRigConfig::default()).unwrap();
        let d = rig.dims();
        assert_eq!(d.vertices, 441);
        assert_eq!(d.landmarks, 73);
        let mut idx = rig.landmark_indices().to_vec();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 73);
        for p in rig.mean_landmarks() {
            assert!((0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]));
        }
    }

    #[test]
    fn generation_is_seeded() {
        let cfg = ToyRigConfig {
            grid: 6,
            expressions: 2,
            identities: 2,
            landmarks: 8,
            seed: 1,
        };
        assert_eq!(toy_rig(&cfg).unwrap(), toy_rig(&cfg).unwrap());
        let other = toy_rig(&ToyRigConfig { seed: 2, ..cfg }).unwrap();
        assert_ne!(toy_rig(&cfg).unwrap(), other);
    }
}
