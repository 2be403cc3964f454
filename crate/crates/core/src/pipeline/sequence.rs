use alloc::vec::Vec;

use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng as _;

use crate::augment::{add_noise, random_background, render_face};
use crate::facemodel::toy::{default_focal, DEFAULT_DEPTH};
use crate::facemodel::{image_center, project_bbox, FaceRig, ShapeParams};
use crate::image::{BBox, BinaryMask, GrayImage, PixelRect, RgbImage};
use crate::rng::{substream, Rng};
use crate::Result;

/// Motion ranges of a synthetic sequence. Angles are amplitudes in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceConfig {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub noise_std: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Lateral sway amplitude in model units.
    pub sway: f64,
    /// Largest expression coefficient reached.
    pub max_expression: f64,
    pub identity_range: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            frames: 180,
            width: 128,
            height: 128,
            noise_std: 2.0,
            yaw: 15f64.to_radians(),
            pitch: 8f64.to_radians(),
            roll: 5f64.to_radians(),
            sway: 0.08,
            max_expression: 0.8,
            identity_range: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFrame {
    pub image: RgbImage,
    /// Rendered face footprint.
    pub mask: BinaryMask,
    pub params: ShapeParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<SequenceFrame>,
    /// Where occluders sit inside the face box, as fractions of the free room.
    pub occluder_anchor: [f64; 2],
    pub occluder_shade: f64,
    pub seed: u64,
}

struct Wave {
    amp: f64,
    cycles: f64,
    phase: f64,
}

impl Wave {
    fn random(amp: f64, rng: &mut Rng) -> Self {
        Self {
            amp: amp * rng.random_range(0.6..1.0),
            cycles: rng.random_range(0.5..2.0),
            phase: rng.random_range(0.0..core::f64::consts::TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.amp * (core::f64::consts::TAU * self.cycles * t + self.phase).sin()
    }
}

/// Smooth head motion and expression changes of one random subject, rendered
/// frame by frame over a fixed background.
pub fn synthetic_sequence(rig: &FaceRig, cfg: &SequenceConfig, seed: u64) -> Result<Sequence> {
    let mut rng = substream(seed, 0);
    let identity: Vec<f64> = (0..rig.identity_count())
        .map(|_| rng.random_range(-cfg.identity_range..=cfg.identity_range))
        .collect();
    let focal = default_focal(cfg.width.max(cfg.height) as f64) * rng.random_range(0.95..1.05);
    let depth = DEFAULT_DEPTH * rng.random_range(0.95..1.05);
    let rot = [cfg.yaw, cfg.pitch, cfg.roll].map(|a| Wave::random(a, &mut rng));
    let sway = [
        Wave::random(cfg.sway, &mut rng),
        Wave::random(cfg.sway, &mut rng),
    ];
    let expr: Vec<(Wave, f64)> = (0..rig.expression_count())
        .map(|_| {
            let peak = cfg.max_expression * rng.random_range(0.0..1.0);
            (Wave::random(1.0, &mut rng), peak)
        })
        .collect();
    let background = random_background(cfg.width, cfg.height, &mut rng);
    let occluder_anchor = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
    let occluder_shade = rng.random_range(120.0..230.0);

    let mut frames = Vec::with_capacity(cfg.frames);
    for i in 0..cfg.frames {
        let t = i as f64 / cfg.frames.max(1) as f64;
        let r = rot.each_ref().map(|w| w.at(t));
        let params = ShapeParams {
            rotation: UnitQuaternion::from_euler_angles(r[1], r[0], r[2]),
            translation: Vector3::new(sway[0].at(t), sway[1].at(t), depth),
            expression: expr
                .iter()
                .map(|(w, peak)| peak * 0.5 * (1.0 + w.at(t)))
                .collect(),
            displacement: alloc::vec![[0.0; 2]; rig.landmark_count()],
            identity: identity.clone(),
            focal,
        };
        let (mut gray, mask) = render_face(&params, rig, &background)?;
        add_noise(&mut gray, cfg.noise_std, &mut substream(seed, 1 + i as u64));
        frames.push(SequenceFrame {
            image: RgbImage::from_gray(&gray),
            mask,
            params,
        });
    }
    Ok(Sequence {
        frames,
        occluder_anchor,
        occluder_shade,
        seed,
    })
}

/// Rectangle covering `coverage` of the area of `face`, with the face's aspect,
/// placed at `anchor` within the room left inside the face box.
pub fn occluder_rect(face: &BBox, coverage: f64, anchor: [f64; 2]) -> Option<PixelRect> {
    if coverage <= 0.0 {
        return None;
    }
    let k = coverage.min(1.0).sqrt();
    let (w, h) = (face.width() * k, face.height() * k);
    let x = face.min[0] + anchor[0] * (face.width() - w);
    let y = face.min[1] + anchor[1] * (face.height() - h);
    let rect = PixelRect::new(
        x.round() as i64,
        y.round() as i64,
        w.round() as usize,
        h.round() as usize,
    );
    (rect.area() > 0).then_some(rect)
}

/// Paints a striped box over the face of `frame`. Returns the occluded image and
/// the visible-face mask.
pub fn occlude_frame(
    frame: &SequenceFrame,
    rig: &FaceRig,
    coverage: f64,
    anchor: [f64; 2],
    shade: f64,
) -> Result<(RgbImage, BinaryMask, Option<PixelRect>)> {
    let (w, h) = frame.image.dims();
    let face = project_bbox(&frame.params, rig, image_center(w, h), 0.0)?;
    let Some(rect) = occluder_rect(&face, coverage, anchor) else {
        return Ok((frame.image.clone(), frame.mask.clone(), None));
    };
    let mut gray: GrayImage = frame.image.luma();
    let mut mask = frame.mask.clone();
    if let Some(r) = rect.clip(w, h) {
        for y in r.y as usize..r.y as usize + r.height {
            for x in r.x as usize..r.x as usize + r.width {
                let stripe = if ((x + y) / 3) % 2 == 0 { 1.0 } else { 0.55 };
                gray.set(x, y, shade * stripe);
            }
        }
        mask.clear_rect(r);
    }
    Ok((RgbImage::from_gray(&gray), mask, Some(rect)))
}
