use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix2x3, UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::linear::IdentityLinear;
use super::{box_qn_minimize, BoxQnConfig, SolverReport};
use crate::facemodel::{FaceRig, ShapeParams, Z_EPSILON};
use crate::{Error, Result};

/// A tracked frame kept for the identity and focal solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub expression: Vec<f64>,
    pub landmarks: Vec<[f64; 2]>,
}

impl Keyframe {
    pub fn new(s: &ShapeParams, landmarks: Vec<[f64; 2]>) -> Self {
        Self {
            rotation: s.rotation,
            translation: s.translation,
            expression: s.expression.clone(),
            landmarks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityConfig {
    pub max_alternations: usize,
    /// Stop when one alternation lowers the objective by less than this fraction.
    pub tolerance: f64,
    pub qn: BoxQnConfig,
    /// Box on each identity coefficient.
    pub identity_bound: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            max_alternations: 20,
            tolerance: 1e-6,
            qn: BoxQnConfig::default(),
            identity_bound: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentitySolution {
    pub identity: Vec<f64>,
    pub focal: f64,
    /// Objective after each alternation, starting with the initial value.
    pub history: Vec<f64>,
    pub report: SolverReport,
}

struct Prepared<'a> {
    keyframes: &'a [Keyframe],
    linear: Vec<IdentityLinear>,
    principal: [f64; 2],
}

impl<'a> Prepared<'a> {
    fn new(keyframes: &'a [Keyframe], rig: &FaceRig, principal: [f64; 2]) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::Empty("keyframes"));
        }
        for k in keyframes {
            Error::check_len(
                "keyframe expression",
                rig.expression_count(),
                k.expression.len(),
            )?;
            Error::check_len(
                "keyframe landmarks",
                rig.landmark_count(),
                k.landmarks.len(),
            )?;
        }
        Ok(Self {
            keyframes,
            linear: keyframes
                .iter()
                .map(|k| IdentityLinear::new(rig, &k.expression))
                .collect(),
            principal,
        })
    }

    /// Objective and gradient over `[u | f]`. Returns `+∞` when a landmark is
    /// behind the camera.
    fn evaluate(&self, u: &[f64], f: f64, grad: Option<&mut [f64]>) -> f64 {
        let nid = u.len();
        let mut total = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (k, lin) in self.keyframes.iter().zip(&self.linear) {
            let rot = k.rotation.to_rotation_matrix();
            for i in 0..lin.landmarks() {
                let c = rot * lin.vertex(i, u) + k.translation;
                if !(c.z > Z_EPSILON) {
                    return f64::INFINITY;
                }
                let iz = 1.0 / c.z;
                let p = k.landmarks[i];
                let rx = f * c.x * iz + self.principal[0] - p[0];
                let ry = f * c.y * iz + self.principal[1] - p[1];
                total += rx * rx + ry * ry;
                if let Some(g) = g.as_deref_mut() {
                    let dproj = Matrix2x3::new(
                        f * iz,
                        0.0,
                        -f * c.x * iz * iz,
                        0.0,
                        f * iz,
                        -f * c.y * iz * iz,
                    );
                    let dr = dproj * rot.matrix();
                    for j in 0..nid {
                        let d = dr * lin.derivative(i, j);
                        g[j] += 2.0 * (rx * d.x + ry * d.y);
                    }
                    g[nid] += 2.0 * (rx * c.x * iz + ry * c.y * iz);
                }
            }
        }
        total
    }

    /// Exact minimizer over `f` with everything else fixed; the objective is
    /// quadratic in `f`.
    fn best_focal(&self, u: &[f64]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (k, lin) in self.keyframes.iter().zip(&self.linear) {
            for i in 0..lin.landmarks() {
                let c = k.rotation * lin.vertex(i, u) + k.translation;
                if !(c.z > Z_EPSILON) {
                    return None;
                }
                let a = [c.x / c.z, c.y / c.z];
                let b = [
                    k.landmarks[i][0] - self.principal[0],
                    k.landmarks[i][1] - self.principal[1],
                ];
                num += a[0] * b[0] + a[1] * b[1];
                den += a[0] * a[0] + a[1] * a[1];
            }
        }
        let f = num / den;
        (f.is_finite() && f > 0.0).then_some(f)
    }
}

/// Sum over keyframes and landmarks of squared reprojection error, with its
/// gradient over `[u (n_id) | f]`.
pub fn identity_objective(
    keyframes: &[Keyframe],
    rig: &FaceRig,
    identity: &[f64],
    focal: f64,
    principal: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    Error::check_len(
        "identity coefficients",
        rig.identity_count(),
        identity.len(),
    )?;
    let prep = Prepared::new(keyframes, rig, principal)?;
    let mut grad = vec![0.0; identity.len() + 1];
    let v = prep.evaluate(identity, focal, Some(&mut grad));
    if !v.is_finite() {
        return Err(Error::NonFinite("identity objective"));
    }
    Ok((v, grad))
}

/// Alternates a bounded quasi-Newton step on the identity coefficients over
/// all keyframes with an exact focal update, until the relative decrease
/// falls below the tolerance.
pub fn solve_identity_focal(
    keyframes: &[Keyframe],
    rig: &FaceRig,
    init_identity: &[f64],
    init_focal: f64,
    principal: [f64; 2],
    cfg: &IdentityConfig,
) -> Result<IdentitySolution> {
    let nid = rig.identity_count();
    Error::check_len("identity coefficients", nid, init_identity.len())?;
    if !(init_focal > 0.0) {
        return Err(Error::invalid("focal length must be positive"));
    }
    let prep = Prepared::new(keyframes, rig, principal)?;
    let mut u = init_identity.to_vec();
    let mut f = init_focal;
    let mut obj = prep.evaluate(&u, f, None);
    if !obj.is_finite() {
        return Err(Error::NonFinite("identity objective at the initial state"));
    }
    let lo = vec![-cfg.identity_bound; nid];
    let hi = vec![cfg.identity_bound; nid];
    let mut history = vec![obj];
    let mut converged = false;
    let mut alternations = 0;
    let mut scratch = vec![0.0; nid + 1];

    while alternations < cfg.max_alternations {
        alternations += 1;
        let start = obj;
        let (nu, rep) = box_qn_minimize(
            |uu, g| {
                let v = prep.evaluate(uu, f, Some(&mut scratch));
                g.copy_from_slice(&scratch[..nid]);
                v
            },
            &lo,
            &hi,
            &u,
            &cfg.qn,
        )?;
        if rep.objective <= obj {
            u = nu;
            obj = rep.objective;
        }
        if let Some(nf) = prep.best_focal(&u) {
            let v = prep.evaluate(&u, nf, None);
            if v <= obj {
                f = nf;
                obj = v;
            }
        }
        history.push(obj);
        if start - obj <= cfg.tolerance * start.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let mut grad = vec![0.0; nid + 1];
    prep.evaluate(&u, f, Some(&mut grad));
    Ok(IdentitySolution {
        identity: u,
        focal: f,
        history,
        report: SolverReport {
            iterations: alternations,
            objective: obj,
            converged,
            gradient_norm: grad.iter().map(|v| v * v).sum::<f64>().sqrt(),
        },
    })
}
