use alloc::vec::Vec;
use nalgebra::{DMatrix, Matrix2x3, Vector3};

use super::{FaceRig, Landmarks2D, ShapeBasis, ShapeParams};
use crate::image::BBox;
use crate::{Error, Result};

/// Minimum camera-space depth for a projectable point.
pub const Z_EPSILON: f64 = 1e-6;

/// Principal point of a `width × height` image.
pub fn image_center(width: usize, height: usize) -> [f64; 2] {
    [width as f64 * 0.5, height as f64 * 0.5]
}

/// Pinhole projection `(f·X/Z + cx, f·Y/Z + cy)`. The caller checks depth.
#[inline]
pub fn project_point(p: &Vector3<f64>, focal: f64, principal: [f64; 2]) -> [f64; 2] {
    [
        focal * p.x / p.z + principal[0],
        focal * p.y / p.z + principal[1],
    ]
}

fn check_params(s: &ShapeParams, rig: &FaceRig) -> Result<()> {
    let d = rig.dims();
    Error::check_len("expression coefficients", d.expressions, s.expression.len())?;
    Error::check_len("identity coefficients", d.identities, s.identity.len())?;
    Error::check_len("landmark displacements", d.landmarks, s.displacement.len())?;
    if !(s.focal > 0.0) {
        return Err(Error::invalid("focal length must be positive"));
    }
    Ok(())
}

#[inline]
fn posed(s: &ShapeParams, basis: &ShapeBasis, i: usize) -> Result<Vector3<f64>> {
    let p = s.rotation * basis.vertex(i, &s.expression) + s.translation;
    if !(p.z > Z_EPSILON) {
        return Err(Error::BehindCamera { index: i, z: p.z });
    }
    Ok(p)
}

/// `p_i = Π_f(R·(b0_i + B_i·x) + t) + d_i` for every landmark.
pub fn project_landmarks(
    s: &ShapeParams,
    rig: &FaceRig,
    principal: [f64; 2],
) -> Result<Landmarks2D> {
    check_params(s, rig)?;
    let basis = rig.landmark_basis(&s.identity)?;
    project_with_basis(s, &basis, principal)
}

/// Landmark projection with a precomputed landmark basis.
pub(crate) fn project_with_basis(
    s: &ShapeParams,
    basis: &ShapeBasis,
    principal: [f64; 2],
) -> Result<Landmarks2D> {
    let mut out = Vec::with_capacity(basis.vertex_count());
    for i in 0..basis.vertex_count() {
        let p = posed(s, basis, i)?;
        let q = project_point(&p, s.focal, principal);
        let d = s.displacement[i];
        out.push([q[0] + d[0], q[1] + d[1]]);
    }
    Ok(Landmarks2D(out))
}

/// Projection of every mesh vertex, without landmark offsets.
pub fn project_vertices(
    s: &ShapeParams,
    rig: &FaceRig,
    principal: [f64; 2],
) -> Result<Vec<[f64; 2]>> {
    check_params(s, rig)?;
    let basis = rig.evaluate(&s.identity)?;
    (0..basis.vertex_count())
        .map(|i| posed(s, &basis, i).map(|p| project_point(&p, s.focal, principal)))
        .collect()
}

/// Bound of every projected mesh vertex, grown by `margin` around its center.
pub fn project_bbox(
    s: &ShapeParams,
    rig: &FaceRig,
    principal: [f64; 2],
    margin: f64,
) -> Result<BBox> {
    let pts = project_vertices(s, rig, principal)?;
    let b = BBox::around(&pts).ok_or(Error::Empty("mesh vertices"))?;
    Ok(b.expanded(margin))
}

/// Landmarks and their Jacobian with respect to
/// `[ω (3) | t (3) | x (n) | u (n_id) | f (1)]`, where `ω` is a left rotation
/// increment `R ← exp(ω)·R`. Rows are `(x_0, y_0, x_1, y_1, …)`; landmark
/// offsets enter with an identity block and are not included.
#[derive(Debug, Clone)]
pub struct LandmarkJacobian {
    pub landmarks: Landmarks2D,
    pub matrix: DMatrix<f64>,
    expressions: usize,
    identities: usize,
}

impl LandmarkJacobian {
    pub const ROTATION: usize = 0;
    pub const TRANSLATION: usize = 3;
    pub const EXPRESSION: usize = 6;

    pub fn identity_offset(&self) -> usize {
        6 + self.expressions
    }

    pub fn focal_column(&self) -> usize {
        6 + self.expressions + self.identities
    }
}

pub fn landmark_jacobian(
    s: &ShapeParams,
    rig: &FaceRig,
    principal: [f64; 2],
) -> Result<LandmarkJacobian> {
    check_params(s, rig)?;
    let n = rig.expression_count();
    let nid = rig.identity_count();
    let m = rig.landmark_count();
    let basis = rig.landmark_basis(&s.identity)?;
    let rot = s.rotation.to_rotation_matrix();
    let mut matrix = DMatrix::zeros(2 * m, 7 + n + nid);
    let mut points = Vec::with_capacity(m);
    for i in 0..m {
        let p = posed(s, &basis, i)?;
        let q = project_point(&p, s.focal, principal);
        let d = s.displacement[i];
        points.push([q[0] + d[0], q[1] + d[1]]);

        let iz = 1.0 / p.z;
        let dproj = Matrix2x3::new(
            s.focal * iz,
            0.0,
            -s.focal * p.x * iz * iz,
            0.0,
            s.focal * iz,
            -s.focal * p.y * iz * iz,
        );
        let rv = p - s.translation;
        // d(exp(ω)·Rv)/dω = -[Rv]×
        let skew = nalgebra::Matrix3::new(0.0, rv.z, -rv.y, -rv.z, 0.0, rv.x, rv.y, -rv.x, 0.0);
        let jr = dproj * skew;
        let rows = 2 * i;
        matrix.fixed_view_mut::<2, 3>(rows, 0).copy_from(&jr);
        matrix.fixed_view_mut::<2, 3>(rows, 3).copy_from(&dproj);
        let dr = dproj * rot.matrix();
        for k in 0..n {
            let c = dr * basis.delta(i, k);
            matrix[(rows, 6 + k)] = c.x;
            matrix[(rows + 1, 6 + k)] = c.y;
        }
        for (j, dv) in rig
            .landmark_identity_derivatives(i, &s.expression)
            .iter()
            .enumerate()
        {
            let c = dr * dv;
            matrix[(rows, 6 + n + j)] = c.x;
            matrix[(rows + 1, 6 + n + j)] = c.y;
        }
        matrix[(rows, 6 + n + nid)] = p.x * iz;
        matrix[(rows + 1, 6 + n + nid)] = p.y * iz;
    }
    Ok(LandmarkJacobian {
        landmarks: Landmarks2D(points),
        matrix,
        expressions: n,
        identities: nid,
    })
}
