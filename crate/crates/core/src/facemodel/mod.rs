//! Blendshape face model.
//!
//! A [`FaceRig`] holds a rank-3 core tensor that maps identity coefficients to a
//! neutral mesh and `n` expression blendshapes. A face state is a
//! [`ShapeParams`]; the regressed subset is a [`ShapeVector`]. Landmarks follow
//! the displaced dynamic expression model: a pinhole projection of the posed
//! 3D landmark vertices plus per-landmark 2D offsets.

mod params;
mod projection;
mod rig;
pub mod toy;

pub use params::{Landmarks2D, ShapeParams, ShapeVector};
pub(crate) use projection::project_with_basis;
pub use projection::{
    image_center, landmark_jacobian, project_bbox, project_landmarks, project_point,
    project_vertices, LandmarkJacobian, Z_EPSILON,
};
pub use rig::{CoefficientPolicy, FaceRig, RigDims, ShapeBasis};
