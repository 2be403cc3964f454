use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::facemodel::toy::{default_focal, DEFAULT_DEPTH};
use crate::facemodel::{image_center, project_point, FaceRig, ShapeParams, Z_EPSILON};
use crate::image::{BinaryMask, GrayImage};
use crate::rng::{substream, Rng};
use crate::{Error, Result};

/// Sampling ranges of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_std: f64,
    /// Largest rotation angle from the frontal pose, radians.
    pub max_rotation: f64,
    /// Identity coefficients are uniform in `±identity_range`.
    pub identity_range: f64,
    /// Lateral translation half-range in model units.
    pub max_shift: f64,
    pub depth: f64,
    pub depth_jitter: f64,
    /// Relative focal jitter around the default focal length.
    pub focal_jitter: f64,
    /// Redraws allowed when a draw projects behind the camera.
    pub max_retries: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            noise_std: 2.0,
            max_rotation: 30f64.to_radians(),
            identity_range: 2.0,
            max_shift: 0.15,
            depth: DEFAULT_DEPTH,
            depth_jitter: 0.3,
            focal_jitter: 0.1,
            max_retries: 20,
        }
    }
}

/// A rendered face with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub params: ShapeParams,
    /// Master seed and index of the stream that produced this sample.
    pub seed: u64,
    pub index: u64,
}

/// Random state within the configured ranges; landmark offsets are zero.
pub fn random_shape(rig: &FaceRig, cfg: &RenderConfig, rng: &mut Rng) -> ShapeParams {
    let r = cfg.max_rotation;
    let mut sym = |h: f64| {
        if h > 0.0 {
            rng.random_range(-h..=h)
        } else {
            0.0
        }
    };
    // Per-axis Euler draws, rejected until the total angle is in range.
    let rotation = loop {
        let q = UnitQuaternion::from_euler_angles(sym(r), sym(r), sym(r));
        if q.angle() <= r {
            break q;
        }
    };
    let translation = Vector3::new(
        sym(cfg.max_shift),
        sym(cfg.max_shift),
        cfg.depth + sym(cfg.depth_jitter),
    );
    let identity = (0..rig.identity_count())
        .map(|_| sym(cfg.identity_range))
        .collect();
    let focal = default_focal(cfg.width.min(cfg.height) as f64) * (1.0 + sym(cfg.focal_jitter));
    let expression = (0..rig.expression_count())
        .map(|_| rng.random::<f64>())
        .collect();
    ShapeParams {
        rotation,
        translation,
        expression,
        displacement: vec![[0.0; 2]; rig.landmark_count()],
        identity,
        focal,
    }
}

/// Smooth random backdrop: a linear ramp plus a low-frequency sinusoid.
pub fn random_background(width: usize, height: usize, rng: &mut Rng) -> GrayImage {
    let base = rng.random_range(40.0..200.0);
    let gx = rng.random_range(-0.6..0.6);
    let gy = rng.random_range(-0.6..0.6);
    let amp = rng.random_range(5.0..30.0);
    let fx = rng.random_range(0.02..0.15);
    let fy = rng.random_range(0.02..0.15);
    let (px, py) = (rng.random_range(0.0..6.3), rng.random_range(0.0..6.3));
    let (cx, cy) = (width as f64 * 0.5, height as f64 * 0.5);
    GrayImage::from_fn(width, height, |x, y| {
        let (x, y) = (x as f64 + 0.5, y as f64 + 0.5);
        let v =
            base + gx * (x - cx) + gy * (y - cy) + amp * (fx * x + px).sin() * (fy * y + py).sin();
        v.clamp(0.0, 255.0)
    })
}

/// Albedo at normalized face coordinates `(a, b) ∈ [-1, 1]²`, `b` pointing down:
/// a skin tone with dark eyes, brows and mouth and a mild texture.
fn albedo(a: f64, b: f64) -> f64 {
    let blob = |da: f64, db: f64, sa: f64, sb: f64| (-(da * da) / sa - (db * db) / sb).exp();
    let mut v = 175.0
        + 20.0 * (3.0 * core::f64::consts::PI * a).sin() * (2.0 * core::f64::consts::PI * b).cos();
    v -= 110.0 * (blob(a - 0.45, b + 0.3, 0.02, 0.01) + blob(a + 0.45, b + 0.3, 0.02, 0.01));
    v -= 60.0 * (blob(a - 0.45, b + 0.52, 0.05, 0.003) + blob(a + 0.45, b + 0.52, 0.05, 0.003));
    v -= 90.0 * blob(a, b - 0.55, 0.08, 0.006);
    v -= 40.0 * blob(a, b - 0.1, 0.006, 0.03);
    v.clamp(0.0, 255.0)
}

/// Per-vertex albedo from the identity-origin neutral shape.
fn vertex_albedo(rig: &FaceRig) -> Result<Vec<f64>> {
    let basis = rig.evaluate(&vec![0.0; rig.identity_count()])?;
    let pts: Vec<Vector3<f64>> = (0..basis.vertex_count())
        .map(|i| basis.neutral_vertex(i))
        .collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let norm = |v: f64, c: usize| 2.0 * (v - lo[c]) / (hi[c] - lo[c]).max(1e-12) - 1.0;
    Ok(pts
        .iter()
        .map(|p| albedo(norm(p.x, 0), norm(p.y, 1)))
        .collect())
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Noise-free flat-shaded z-buffer rendering of `s` over `background`. The
/// mask marks every pixel whose center any triangle covers.
pub fn render_face(
    s: &ShapeParams,
    rig: &FaceRig,
    background: &GrayImage,
) -> Result<(GrayImage, BinaryMask)> {
    let (w, h) = background.dims();
    let principal = image_center(w, h);
    let basis = rig.evaluate(&s.identity)?;
    let albedo = vertex_albedo(rig)?;
    let mut cam = Vec::with_capacity(basis.vertex_count());
    for i in 0..basis.vertex_count() {
        let p = s.rotation * basis.vertex(i, &s.expression) + s.translation;
        if !(p.z > Z_EPSILON) {
            return Err(Error::BehindCamera { index: i, z: p.z });
        }
        cam.push(p);
    }
    let screen: Vec<[f64; 2]> = cam
        .iter()
        .map(|p| project_point(p, s.focal, principal))
        .collect();
    let light = Vector3::new(-0.3, -0.4, -1.0).normalize();

    let mut image = background.clone();
    let mut mask = BinaryMask::new(w, h, false);
    let mut zbuf = vec![0.0f64; w * h]; // 1/z, larger is nearer
    for tri in rig.triangles() {
        let [i0, i1, i2] = *tri;
        let (a, b, c) = (screen[i0], screen[i1], screen[i2]);
        let area = edge(a, b, c);
        if area.abs() < 1e-12 {
            continue;
        }
        let n = (cam[i1] - cam[i0]).cross(&(cam[i2] - cam[i0]));
        let nn = n.norm();
        let shade = if nn > 0.0 {
            0.35 + 0.65 * (n.dot(&light) / nn).abs()
        } else {
            0.35
        };
        let zi = [1.0 / cam[i0].z, 1.0 / cam[i1].z, 1.0 / cam[i2].z];
        let al = [albedo[i0], albedo[i1], albedo[i2]];
        let x0 = (a[0].min(b[0]).min(c[0]) - 0.5).ceil().max(0.0) as usize;
        let y0 = (a[1].min(b[1]).min(c[1]) - 0.5).ceil().max(0.0) as usize;
        let x1 = ((a[0].max(b[0]).max(c[0]) - 0.5).floor() + 1.0).clamp(0.0, w as f64) as usize;
        let y1 = ((a[1].max(b[1]).max(c[1]) - 0.5).floor() + 1.0).clamp(0.0, h as f64) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let w0 = edge(b, c, p) / area;
                let w1 = edge(c, a, p) / area;
                let w2 = 1.0 - w0 - w1;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * zi[0] + w1 * zi[1] + w2 * zi[2];
                let k = y * w + x;
                if z <= zbuf[k] {
                    continue;
                }
                zbuf[k] = z;
                let alb = (w0 * zi[0] * al[0] + w1 * zi[1] * al[1] + w2 * zi[2] * al[2]) / z;
                image.set(x, y, alb * shade);
                mask.set(x, y, true);
            }
        }
    }
    Ok((image, mask))
}

/// Adds `N(0, std)` noise and clamps to `[0, 255]`.
pub fn add_noise(image: &mut GrayImage, std: f64, rng: &mut Rng) {
    if std <= 0.0 {
        return;
    }
    let n = Normal::new(0.0, std).expect("positive std");
    for v in image.as_mut_slice() {
        *v = (*v + n.sample(rng)).clamp(0.0, 255.0);
    }
}

/// Sample `index` of the stream seeded by `seed`; the same pair always
/// yields the same sample.
pub fn synthetic_sample(
    rig: &FaceRig,
    cfg: &RenderConfig,
    seed: u64,
    index: u64,
) -> Result<SyntheticSample> {
    if rig.triangles().len() < 4 {
        return Err(Error::invalid("rig needs at least four triangles"));
    }
    let mut rng = substream(seed, index);
    let mut last = None;
    for _ in 0..=cfg.max_retries {
        let params = random_shape(rig, cfg, &mut rng);
        let bg = random_background(cfg.width, cfg.height, &mut rng);
        match render_face(&params, rig, &bg) {
            Ok((mut image, mask)) => {
                add_noise(&mut image, cfg.noise_std, &mut rng);
                return Ok(SyntheticSample {
                    image,
                    mask,
                    params,
                    seed,
                    index,
                });
            }
            Err(e @ Error::BehindCamera { .. }) => {
                log::debug!("synthetic draw {index} rejected: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::invalid("no draw attempted")))
}

/// `count` samples, sample `i` drawn from stream `i` of `seed`.
pub fn gen_synthetic_dataset(
    rig: &FaceRig,
    count: usize,
    cfg: &RenderConfig,
    seed: u64,
) -> Result<Vec<SyntheticSample>> {
    (0..count as u64)
        .map(|i| synthetic_sample(rig, cfg, seed, i))
        .collect()
}
