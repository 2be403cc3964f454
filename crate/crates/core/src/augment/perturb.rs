use alloc::vec::Vec;
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng as _;

use crate::facemodel::{project_landmarks, FaceRig, ShapeParams, ShapeVector};
use crate::rng::Rng;
use crate::Result;

/// Half-widths of the uniform perturbations and how many variants each
/// parameter group contributes per input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbRanges {
    /// Radians, per tangent-space axis.
    pub rotation: f64,
    /// Fraction of the face depth `t_z`, per axis.
    pub translation: f64,
    /// Added to every expression coefficient before clipping to `[0, 1]`.
    pub expression: f64,
    pub identity: f64,
    /// Relative change of `f`.
    pub focal: f64,
    pub expression_count: usize,
    pub rotation_count: usize,
    pub translation_count: usize,
    pub identity_count: usize,
    pub focal_count: usize,
}

impl Default for PerturbRanges {
    fn default() -> Self {
        Self {
            rotation: 0.15,
            translation: 0.05,
            expression: 0.3,
            identity: 0.5,
            focal: 0.15,
            expression_count: 15,
            rotation_count: 5,
            translation_count: 5,
            identity_count: 5,
            focal_count: 5,
        }
    }
}

impl PerturbRanges {
    /// Same counts, zero half-widths.
    pub fn zero() -> Self {
        Self {
            rotation: 0.0,
            translation: 0.0,
            expression: 0.0,
            identity: 0.0,
            focal: 0.0,
            ..Self::default()
        }
    }

    /// Variants per input.
    pub fn multiplicity(&self) -> usize {
        self.expression_count
            + self.rotation_count
            + self.translation_count
            + self.identity_count
            + self.focal_count
    }

    /// Every count scaled to `count` (at least the same ratio is not kept;
    /// used for small desk-scale datasets).
    pub fn with_counts(self, expression: usize, others: usize) -> Self {
        Self {
            expression_count: expression,
            rotation_count: others,
            translation_count: others,
            identity_count: others,
            focal_count: others,
            ..self
        }
    }
}

/// Training set size produced from `inputs` annotated faces.
pub fn dataset_size(inputs: usize, ranges: &PerturbRanges) -> usize {
    inputs * ranges.multiplicity()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbGroup {
    Expression,
    Rotation,
    Translation,
    Identity,
    Focal,
}

/// A perturbed starting state: the shape vector and the identity and focal
/// length the regressor will use with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub group: PerturbGroup,
    pub shape: ShapeVector,
    pub identity: Vec<f64>,
    pub focal: f64,
}

fn sym(rng: &mut Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

/// Perturbs one parameter group at a time: expression variants first, then
/// rotation, translation, identity and focal.
pub fn perturb_shape(sg: &ShapeParams, ranges: &PerturbRanges, rng: &mut Rng) -> Vec<Perturbed> {
    let base = sg.shape_vector();
    let mut out = Vec::with_capacity(ranges.multiplicity());
    let push = |out: &mut Vec<Perturbed>, group, shape, identity: &[f64], focal| {
        out.push(Perturbed {
            group,
            shape,
            identity: identity.to_vec(),
            focal,
        })
    };
    for _ in 0..ranges.expression_count {
        let mut q = base.clone();
        for v in q.expression_mut() {
            *v = (*v + sym(rng, ranges.expression)).clamp(0.0, 1.0);
        }
        push(
            &mut out,
            PerturbGroup::Expression,
            q,
            &sg.identity,
            sg.focal,
        );
    }
    for _ in 0..ranges.rotation_count {
        let w = Vector3::new(
            sym(rng, ranges.rotation),
            sym(rng, ranges.rotation),
            sym(rng, ranges.rotation),
        );
        let mut s = sg.clone();
        s.rotation = UnitQuaternion::from_scaled_axis(w) * sg.rotation;
        push(
            &mut out,
            PerturbGroup::Rotation,
            s.shape_vector(),
            &sg.identity,
            sg.focal,
        );
    }
    for _ in 0..ranges.translation_count {
        let h = ranges.translation * sg.translation.z.abs();
        let mut s = sg.clone();
        s.translation += Vector3::new(sym(rng, h), sym(rng, h), sym(rng, h));
        push(
            &mut out,
            PerturbGroup::Translation,
            s.shape_vector(),
            &sg.identity,
            sg.focal,
        );
    }
    for _ in 0..ranges.identity_count {
        let u: Vec<f64> = sg
            .identity
            .iter()
            .map(|v| v + sym(rng, ranges.identity))
            .collect();
        push(&mut out, PerturbGroup::Identity, base.clone(), &u, sg.focal);
    }
    for _ in 0..ranges.focal_count {
        let f = sg.focal * (1.0 + sym(rng, ranges.focal));
        push(&mut out, PerturbGroup::Focal, base.clone(), &sg.identity, f);
    }
    out
}

/// Ground-truth shape vector for a sample regressed with `(identity, focal)`
/// instead of the true ones: the landmark offsets absorb the difference so
/// the target still projects onto the true landmarks.
pub fn retarget(
    sg: &ShapeParams,
    rig: &FaceRig,
    identity: &[f64],
    focal: f64,
    principal: [f64; 2],
) -> Result<ShapeVector> {
    let truth = project_landmarks(sg, rig, principal)?;
    let mut s = sg.clone();
    s.identity = identity.to_vec();
    s.focal = focal;
    s.displacement.iter_mut().for_each(|d| *d = [0.0; 2]);
    let bare = project_landmarks(&s, rig, principal)?;
    for ((d, t), b) in s
        .displacement
        .iter_mut()
        .zip(truth.points())
        .zip(bare.points())
    {
        *d = [t[0] - b[0], t[1] - b[1]];
    }
    Ok(s.shape_vector())
}
