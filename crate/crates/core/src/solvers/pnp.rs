use alloc::vec::Vec;
use nalgebra::{Matrix2x3, Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::SolverReport;
use crate::facemodel::Z_EPSILON;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpConfig {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop once an accepted step changes the squared error by less than
    /// this fraction.
    pub relative_tolerance: f64,
}

impl Default for PnpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            initial_damping: 1e-4,
            relative_tolerance: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    /// Sum of squared reprojection errors.
    pub cost: f64,
    pub report: SolverReport,
}

impl PnpResult {
    pub fn rmse(&self, points: usize) -> f64 {
        (self.cost / points.max(1) as f64).sqrt()
    }
}

pub(crate) fn skew_neg(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, v.z, -v.y, -v.z, 0.0, v.x, v.y, -v.x, 0.0)
}

fn cost_at(
    points3d: &[Vector3<f64>],
    points2d: &[[f64; 2]],
    focal: f64,
    principal: [f64; 2],
    r: &UnitQuaternion<f64>,
    t: &Vector3<f64>,
) -> Option<f64> {
    let mut total = 0.0;
    for (v, p) in points3d.iter().zip(points2d) {
        let c = r * v + t;
        if !(c.z > Z_EPSILON) {
            return None;
        }
        let ex = focal * c.x / c.z + principal[0] - p[0];
        let ey = focal * c.y / c.z + principal[1] - p[1];
        total += ex * ex + ey * ey;
    }
    Some(total)
}

/// Reprojection residuals `(u_i − p_i)` stacked as `(x_0, y_0, x_1, …)` and
/// their Jacobian with respect to a left rotation increment and the
/// translation, `[ω (3) | t (3)]`.
pub fn pnp_residuals(
    points3d: &[Vector3<f64>],
    points2d: &[[f64; 2]],
    focal: f64,
    principal: [f64; 2],
    rotation: &UnitQuaternion<f64>,
    translation: &Vector3<f64>,
) -> Result<(Vec<f64>, Vec<[f64; 6]>)> {
    Error::check_len("2D points", points3d.len(), points2d.len())?;
    let mut res = Vec::with_capacity(2 * points3d.len());
    let mut jac = Vec::with_capacity(2 * points3d.len());
    for (index, (v, p)) in points3d.iter().zip(points2d).enumerate() {
        let rv = rotation * v;
        let c = rv + translation;
        if !(c.z > Z_EPSILON) {
            return Err(Error::BehindCamera { index, z: c.z });
        }
        let iz = 1.0 / c.z;
        res.push(focal * c.x * iz + principal[0] - p[0]);
        res.push(focal * c.y * iz + principal[1] - p[1]);
        let dproj = Matrix2x3::new(
            focal * iz,
            0.0,
            -focal * c.x * iz * iz,
            0.0,
            focal * iz,
            -focal * c.y * iz * iz,
        );
        let jr = dproj * skew_neg(&rv);
        for row in 0..2 {
            jac.push([
                jr[(row, 0)],
                jr[(row, 1)],
                jr[(row, 2)],
                dproj[(row, 0)],
                dproj[(row, 1)],
                dproj[(row, 2)],
            ]);
        }
    }
    Ok((res, jac))
}

/// Damped Gauss-Newton refinement of a rigid pose from 3D-2D
/// correspondences. Only steps that lower the squared reprojection error are
/// taken; a rejected step raises the damping.
pub fn pnp_refine(
    points3d: &[Vector3<f64>],
    points2d: &[[f64; 2]],
    focal: f64,
    principal: [f64; 2],
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    cfg: &PnpConfig,
) -> Result<PnpResult> {
    Error::check_len("2D points", points3d.len(), points2d.len())?;
    if points3d.len() < 4 {
        return Err(Error::InsufficientSamples {
            needed: 4,
            got: points3d.len(),
        });
    }
    if !(focal > 0.0) {
        return Err(Error::invalid("focal length must be positive"));
    }
    let (mut r, mut t) = (rotation, translation);
    let (res, jac) = pnp_residuals(points3d, points2d, focal, principal, &r, &t)?;
    let mut cost: f64 = res.iter().map(|v| v * v).sum();
    let mut system = normal_equations(&res, &jac);
    let mut lambda = cfg.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut failures = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let (jtj, jtr) = &system;
        if jtr.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut a = *jtj;
        for k in 0..6 {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&-jtr),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let rn = UnitQuaternion::from_scaled_axis(Vector3::new(step[0], step[1], step[2])) * r;
        let tn = t + Vector3::new(step[3], step[4], step[5]);
        match cost_at(points3d, points2d, focal, principal, &rn, &tn) {
            Some(c) if c < cost => {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                r = rn;
                t = tn;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                failures = 0;
                let (res, jac) = pnp_residuals(points3d, points2d, focal, principal, &r, &t)?;
                system = normal_equations(&res, &jac);
                if rel < cfg.relative_tolerance || step.amax() < 1e-15 {
                    converged = true;
                    break;
                }
            }
            _ => {
                lambda *= 10.0;
                failures += 1;
                if failures > 12 || lambda > 1e12 {
                    // Nothing downhill at any damping: a local minimum up to round-off.
                    converged = system.1.amax() <= 1e-6 * (1.0 + cost.sqrt());
                    break;
                }
            }
        }
    }
    if !converged {
        log::debug!("pnp_refine stopped after {iterations} iterations without converging");
    }
    Ok(PnpResult {
        rotation: r,
        translation: t,
        cost,
        report: SolverReport {
            iterations,
            objective: cost,
            converged,
            gradient_norm: 2.0 * system.1.norm(),
        },
    })
}

fn normal_equations(res: &[f64], jac: &[[f64; 6]]) -> (Matrix6<f64>, Vector6<f64>) {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for (row, &r) in jac.iter().zip(res) {
        let j = Vector6::from_column_slice(row);
        jtj += j * j.transpose();
        jtr += j * r;
    }
    (jtj, jtr)
}
