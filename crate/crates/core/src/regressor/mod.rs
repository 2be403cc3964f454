//! Cascaded random-fern regression of the shape vector.
//!
//! Each stage reads image intensities at feature points that follow the
//! current landmark estimate (barycentric coordinates over a triangulation
//! of the mean landmarks), then applies `K` ferns in sequence. With a mask,
//! pixels outside the face read 0, so the regression sees the face region only.

mod features;
mod fern;
mod train;

pub use features::{
    extract_features, sample_feature_points, sample_feature_points_with, triangulate, FeaturePoint,
    FeaturePointSet, FEATURE_SIGMA,
};
pub use fern::Fern;
pub use train::{train_cascade, TrainReport};

use alloc::vec;
use alloc::vec::Vec;

use crate::facemodel::project_with_basis;
use crate::facemodel::{image_center, FaceRig, ShapeBasis, ShapeParams, ShapeVector};
use crate::image::{clamp_pixel, BinaryMask, GrayImage};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    /// Cascade stages `T`.
    pub stages: usize,
    /// Ferns per stage `K`.
    pub ferns: usize,
    /// Fern depth `F`.
    pub depth: usize,
    /// Feature points per stage.
    pub features: usize,
    /// Bin shrinkage `β`: a bin stores `Σ residual / (|bin| + β)`.
    pub shrinkage: f64,
    pub feature_sigma: f64,
    /// Skip feature points that fall outside the face mask in more than
    /// `offface_limit` of the training samples when choosing pairs.
    pub exclude_offface_pairs: bool,
    pub offface_limit: f64,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            stages: 10,
            ferns: 300,
            depth: 5,
            features: 400,
            shrinkage: 1000.0,
            feature_sigma: FEATURE_SIGMA,
            exclude_offface_pairs: false,
            offface_limit: 0.5,
            seed: 0,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::invalid("fern depth must be in 1..=16"));
        }
        if self.features < 2 || self.features > u16::MAX as usize {
            return Err(Error::invalid("feature point count must be in 2..=65535"));
        }
        if !(self.shrinkage >= 0.0) || !(self.feature_sigma > 0.0) {
            return Err(Error::invalid(
                "shrinkage must be >= 0 and feature sigma > 0",
            ));
        }
        Ok(())
    }
}

/// One training instance: an image, its mask, the starting and target shape
/// vectors, and the fixed identity and focal length used to project them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub initial: ShapeVector,
    pub target: ShapeVector,
    pub identity: Vec<f64>,
    pub focal: f64,
}

impl TrainingSample {
    /// Principal point: the image center.
    pub fn principal(&self) -> [f64; 2] {
        image_center(self.image.width(), self.image.height())
    }

    fn check(&self, rig: &FaceRig) -> Result<()> {
        let dim = ShapeVector::len_for(rig.expression_count(), rig.landmark_count());
        Error::check_len("initial shape vector", dim, self.initial.len())?;
        Error::check_len("target shape vector", dim, self.target.len())?;
        Error::check_len(
            "identity coefficients",
            rig.identity_count(),
            self.identity.len(),
        )?;
        Error::check_len("mask width", self.image.width(), self.mask.width())?;
        Error::check_len("mask height", self.image.height(), self.mask.height())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub points: FeaturePointSet,
    pub ferns: Vec<Fern>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub config: CascadeConfig,
    pub expressions: usize,
    pub landmarks: usize,
    pub stages: Vec<Stage>,
}

impl CascadeModel {
    pub fn dim(&self) -> usize {
        ShapeVector::len_for(self.expressions, self.landmarks)
    }

    /// Copy with every bin set to zero; regression with it returns its input
    /// (expression clamped).
    pub fn zeroed(&self) -> Self {
        let mut m = self.clone();
        for s in &mut m.stages {
            for f in &mut s.ferns {
                f.bins.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressOutput {
    pub shape: ShapeVector,
    /// Set when a stage could not project the current shape; `shape` is then
    /// the last shape that projected.
    pub failed: bool,
    pub stages_completed: usize,
}

pub(crate) fn landmarks_for(
    q: &ShapeVector,
    basis: &ShapeBasis,
    focal: f64,
    principal: [f64; 2],
) -> Result<Vec<[f64; 2]>> {
    let s = ShapeParams {
        rotation: q.rotation(),
        translation: q.translation(),
        expression: q.expression().to_vec(),
        displacement: q.displacement().collect(),
        identity: Vec::new(),
        focal,
    };
    Ok(project_with_basis(&s, basis, principal)?.0)
}

/// Shape-indexed feature locations for `q`: the feature points decoded with
/// the projected landmarks of `q` as triangle corners.
pub fn localize_features(
    q: &ShapeVector,
    points: &FeaturePointSet,
    rig: &FaceRig,
    identity: &[f64],
    focal: f64,
    principal: [f64; 2],
) -> Result<Vec<[f64; 2]>> {
    let basis = rig.landmark_basis(identity)?;
    Error::check_len(
        "shape vector",
        ShapeVector::len_for(rig.expression_count(), rig.landmark_count()),
        q.len(),
    )?;
    let lm = landmarks_for(q, &basis, focal, principal)?;
    Ok(points.decode(&lm))
}

/// Runs the cascade from `q0`. The principal point is the image center.
/// Expression coefficients are clamped to `[0, 1]` at the end.
pub fn regress(
    image: &GrayImage,
    mask: Option<&BinaryMask>,
    q0: &ShapeVector,
    model: &CascadeModel,
    rig: &FaceRig,
    identity: &[f64],
    focal: f64,
) -> Result<RegressOutput> {
    if model.stages.is_empty() {
        return Err(Error::Untrained);
    }
    Error::check_len("shape vector", model.dim(), q0.len())?;
    Error::check_len("model landmarks", rig.landmark_count(), model.landmarks)?;
    if let Some(m) = mask {
        Error::check_len("mask width", image.width(), m.width())?;
        Error::check_len("mask height", image.height(), m.height())?;
    }
    let basis = rig.landmark_basis(identity)?;
    let principal = image_center(image.width(), image.height());
    let (w, h) = image.dims();
    let mut q = q0.clone();
    let mut coords = Vec::new();
    let mut feats: Vec<f32> = Vec::new();
    let mut delta = vec![0.0; model.dim()];
    for (t, stage) in model.stages.iter().enumerate() {
        let lm = match landmarks_for(&q, &basis, focal, principal) {
            Ok(lm) => lm,
            Err(e) => {
                log::warn!("regression stopped at stage {t}: {e}");
                q.clamp_expression();
                return Ok(RegressOutput {
                    shape: q,
                    failed: true,
                    stages_completed: t,
                });
            }
        };
        stage.points.decode_into(&lm, &mut coords);
        feats.clear();
        feats.extend(coords.iter().map(|c| {
            let (x, y) = clamp_pixel(c[0], c[1], w, h);
            if mask.is_none_or(|m| m.get(x, y)) {
                image.get(x, y) as f32
            } else {
                0.0
            }
        }));
        for fern in &stage.ferns {
            for (d, &v) in delta.iter_mut().zip(fern.bin(fern.bin_index(&feats))) {
                *d = v as f64;
            }
            q.compose_in_place(&delta);
        }
    }
    q.clamp_expression();
    Ok(RegressOutput {
        shape: q,
        failed: false,
        stages_completed: model.stages.len(),
    })
}

#[cfg(test)]
mod tests;
