//! Training-data generation: shape perturbation, occlusions, compositing,
//! negative samples and a synthetic face renderer.

mod composite;
mod negative;
mod occlusion;
mod perturb;
mod render;
#[cfg(test)]
mod tests;

use alloc::vec::Vec;

pub use composite::{composite, Similarity};
pub use negative::{balanced_negatives, negative_samples, NegativeConfig};
pub use occlusion::{
    apply_crop, crop_box, occlusion_crop_regression, occlusion_rect_segmentation, paint_occlusion,
    CropConfig, SegOcclusionConfig,
};
pub use perturb::{dataset_size, perturb_shape, retarget, PerturbGroup, PerturbRanges, Perturbed};
pub use render::{
    add_noise, gen_synthetic_dataset, random_background, random_shape, render_face,
    synthetic_sample, RenderConfig, SyntheticSample,
};

use crate::facemodel::{image_center, FaceRig};
use crate::regressor::TrainingSample;
use crate::rng::substream;
use crate::Result;

/// Regression training pairs for one rendered face, one per perturbation.
/// Identity and focal variants keep the true shape as the start and a
/// retargeted shape as the goal.
pub fn training_samples(
    sample: &SyntheticSample,
    rig: &FaceRig,
    ranges: &PerturbRanges,
    rng: &mut crate::rng::Rng,
) -> Result<Vec<TrainingSample>> {
    let principal = image_center(sample.image.width(), sample.image.height());
    let truth = sample.params.shape_vector();
    perturb_shape(&sample.params, ranges, rng)
        .into_iter()
        .map(|p| {
            let target = match p.group {
                PerturbGroup::Identity | PerturbGroup::Focal => {
                    retarget(&sample.params, rig, &p.identity, p.focal, principal)?
                }
                _ => truth.clone(),
            };
            Ok(TrainingSample {
                image: sample.image.clone(),
                mask: sample.mask.clone(),
                initial: p.shape,
                target,
                identity: p.identity,
                focal: p.focal,
            })
        })
        .collect()
}

/// The full regression set: perturbations of every face and, with `crop`
/// set, one occluded copy of each pair. Face `i` draws from stream `i` of
/// `seed`.
pub fn regression_training_set(
    faces: &[SyntheticSample],
    rig: &FaceRig,
    ranges: &PerturbRanges,
    crop: Option<&CropConfig>,
    seed: u64,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for (i, face) in faces.iter().enumerate() {
        let mut rng = substream(seed, i as u64);
        let pairs = training_samples(face, rig, ranges, &mut rng)?;
        for s in pairs {
            if let Some(cfg) = crop {
                let occluded = occlusion_crop_regression(&s, rig, cfg, &mut rng)?;
                out.push(s);
                out.push(occluded);
            } else {
                out.push(s);
            }
        }
    }
    Ok(out)
}
