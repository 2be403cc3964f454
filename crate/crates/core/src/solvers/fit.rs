use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Matrix2x3, UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use super::linear::IdentityLinear;
use super::{box_qn_minimize, pnp_refine, BoxQnConfig, PnpConfig, SolverReport};
use crate::facemodel::{landmark_jacobian, FaceRig, ShapeBasis, ShapeParams, Z_EPSILON};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    /// Alternation rounds of pose, expression, identity and focal updates.
    pub rounds: usize,
    pub qn: BoxQnConfig,
    pub pnp: PnpConfig,
    pub identity_bound: f64,
    /// Focal search interval; `None` uses `[0.25·w, 8·w]` with `w = 2·cx`.
    pub focal_range: Option<(f64, f64)>,
    pub focal_grid: usize,
    pub golden_iterations: usize,
    /// Joint damped Gauss-Newton iterations over all free parameters after
    /// the alternation. Zero disables the polish.
    pub polish_iterations: usize,
    pub fit_expression: bool,
    pub fit_identity: bool,
    pub fit_focal: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            qn: BoxQnConfig::default(),
            pnp: PnpConfig::default(),
            identity_bound: 3.0,
            focal_range: None,
            focal_grid: 25,
            golden_iterations: 40,
            polish_iterations: 200,
            fit_expression: true,
            fit_identity: true,
            fit_focal: true,
        }
    }
}

impl FitConfig {
    /// Rigid pose only: expression, identity and focal stay at their initial values.
    pub fn pose_only() -> Self {
        Self {
            fit_expression: false,
            fit_identity: false,
            fit_focal: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Fitted parameters. Displacements hold the remaining per-landmark
    /// residual `P − Π(·)`, so the parameters reproduce the targets exactly.
    pub params: ShapeParams,
    /// Objective after the initial state and after each round, then after the polish.
    pub history: Vec<f64>,
    pub report: SolverReport,
}

impl FitResult {
    pub fn rmse(&self) -> f64 {
        let m = self.params.displacement.len().max(1);
        (self.report.objective / m as f64).sqrt()
    }
}

fn theta_with_basis(
    s: &ShapeParams,
    basis: &ShapeBasis,
    targets: &[[f64; 2]],
    principal: [f64; 2],
) -> f64 {
    let mut total = 0.0;
    for (i, p) in targets.iter().enumerate() {
        let c = s.rotation * basis.vertex(i, &s.expression) + s.translation;
        if !(c.z > Z_EPSILON) {
            return f64::INFINITY;
        }
        let rx = s.focal * c.x / c.z + principal[0] - p[0];
        let ry = s.focal * c.y / c.z + principal[1] - p[1];
        total += rx * rx + ry * ry;
    }
    total
}

fn theta(s: &ShapeParams, rig: &FaceRig, targets: &[[f64; 2]], principal: [f64; 2]) -> Result<f64> {
    Ok(theta_with_basis(
        s,
        &rig.landmark_basis(&s.identity)?,
        targets,
        principal,
    ))
}

/// Sum of squared distances between the projected landmarks (offsets
/// ignored) and `targets`, with its gradient over
/// `[ω (3) | t (3) | x (n) | u (n_id) | f]`, `ω` a left rotation increment.
pub fn reconstruction_objective(
    s: &ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
) -> Result<(f64, Vec<f64>)> {
    Error::check_len("target landmarks", rig.landmark_count(), targets.len())?;
    let mut s0 = s.clone();
    s0.displacement.iter_mut().for_each(|d| *d = [0.0; 2]);
    let jac = landmark_jacobian(&s0, rig, principal)?;
    let mut r = DVector::zeros(2 * targets.len());
    for (i, (q, p)) in jac.landmarks.points().iter().zip(targets).enumerate() {
        r[2 * i] = q[0] - p[0];
        r[2 * i + 1] = q[1] - p[1];
    }
    let g = jac.matrix.transpose() * &r * 2.0;
    Ok((r.norm_squared(), g.as_slice().to_vec()))
}

/// Fits `{R, t, x, u, f}` to 2D landmarks by minimizing the summed squared
/// reprojection error. Each round refines the pose, then the expression
/// within `[0, 1]`, then the identity within the configured box, then the
/// focal length by a profiled search with the pose re-solved per candidate.
/// A joint damped Gauss-Newton polish runs last.
pub fn fit_ground_truth(
    targets: &[[f64; 2]],
    rig: &FaceRig,
    init: &ShapeParams,
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<FitResult> {
    Error::check_len("target landmarks", rig.landmark_count(), targets.len())?;
    Error::check_len(
        "expression coefficients",
        rig.expression_count(),
        init.expression.len(),
    )?;
    Error::check_len(
        "identity coefficients",
        rig.identity_count(),
        init.identity.len(),
    )?;
    if targets.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("target landmarks"));
    }
    let mut s = init.clone();
    s.displacement = vec![[0.0; 2]; rig.landmark_count()];
    for v in &mut s.expression {
        *v = v.clamp(0.0, 1.0);
    }
    let b = cfg.identity_bound;
    for v in &mut s.identity {
        *v = v.clamp(-b, b);
    }
    let mut obj = theta(&s, rig, targets, principal)?;
    if !obj.is_finite() {
        return Err(Error::NonFinite("objective at the initial state"));
    }
    let mut history = vec![obj];
    let mut rounds = 0;

    for _ in 0..cfg.rounds {
        if obj <= 1e-24 {
            break;
        }
        rounds += 1;
        let saved = (s.clone(), obj);
        pose_step(&mut s, rig, targets, principal, cfg)?;
        if cfg.fit_expression {
            expression_step(&mut s, rig, targets, principal, cfg)?;
        }
        if cfg.fit_identity {
            identity_step(&mut s, rig, targets, principal, cfg)?;
        }
        if cfg.fit_focal {
            focal_step(&mut s, rig, targets, principal, cfg)?;
        }
        let now = theta(&s, rig, targets, principal)?;
        if !(now <= saved.1) {
            log::warn!(
                "ground-truth fit diverged ({} -> {now}); reverting round",
                saved.1
            );
            s = saved.0;
            break;
        }
        obj = now;
        history.push(obj);
    }

    let polished = if cfg.polish_iterations > 0 && obj > 1e-24 {
        polish(&mut s, rig, targets, principal, cfg)?
    } else {
        0
    };
    if polished > 0 {
        obj = theta(&s, rig, targets, principal)?;
        history.push(obj);
    }

    let (_, grad) = reconstruction_objective(&s, rig, targets, principal)?;
    let basis = rig.landmark_basis(&s.identity)?;
    for (i, p) in targets.iter().enumerate() {
        let c = s.rotation * basis.vertex(i, &s.expression) + s.translation;
        s.displacement[i] = [
            p[0] - (s.focal * c.x / c.z + principal[0]),
            p[1] - (s.focal * c.y / c.z + principal[1]),
        ];
    }
    Ok(FitResult {
        params: s,
        history,
        report: SolverReport {
            iterations: rounds + polished,
            objective: obj,
            converged: obj <= 1e-20 || grad.iter().all(|g| g.abs() < 1e-6),
            gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        },
    })
}

fn pose_step(
    s: &mut ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<f64> {
    let basis = rig.landmark_basis(&s.identity)?;
    let pts: Vec<Vector3<f64>> = (0..targets.len())
        .map(|i| basis.vertex(i, &s.expression))
        .collect();
    let r = pnp_refine(
        &pts,
        targets,
        s.focal,
        principal,
        s.rotation,
        s.translation,
        &cfg.pnp,
    )?;
    s.rotation = r.rotation;
    s.translation = r.translation;
    Ok(r.cost)
}

fn expression_step(
    s: &mut ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<()> {
    let n = rig.expression_count();
    let basis = rig.landmark_basis(&s.identity)?;
    let rot = s.rotation.to_rotation_matrix();
    let m = targets.len();
    // Rotated neutral and blendshape columns, reused by every evaluation.
    let base: Vec<Vector3<f64>> = (0..m)
        .map(|i| rot * basis.neutral_vertex(i) + s.translation)
        .collect();
    let cols: Vec<Vector3<f64>> = (0..m)
        .flat_map(|i| (0..n).map(move |k| (i, k)))
        .map(|(i, k)| rot * basis.delta(i, k))
        .collect();
    let f = s.focal;
    let objective = |x: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for i in 0..m {
            let ci = &cols[i * n..(i + 1) * n];
            let mut c = base[i];
            for (col, xk) in ci.iter().zip(x) {
                c += col * *xk;
            }
            if !(c.z > Z_EPSILON) {
                return f64::INFINITY;
            }
            let iz = 1.0 / c.z;
            let rx = f * c.x * iz + principal[0] - targets[i][0];
            let ry = f * c.y * iz + principal[1] - targets[i][1];
            total += rx * rx + ry * ry;
            let dproj = Matrix2x3::new(
                f * iz,
                0.0,
                -f * c.x * iz * iz,
                0.0,
                f * iz,
                -f * c.y * iz * iz,
            );
            for (k, col) in ci.iter().enumerate() {
                let d = dproj * col;
                g[k] += 2.0 * (rx * d.x + ry * d.y);
            }
        }
        total
    };
    let (x, _) = box_qn_minimize(
        objective,
        &vec![0.0; n],
        &vec![1.0; n],
        &s.expression,
        &cfg.qn,
    )?;
    s.expression = x;
    Ok(())
}

fn identity_step(
    s: &mut ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<()> {
    let nid = rig.identity_count();
    let lin = IdentityLinear::new(rig, &s.expression);
    let rot = s.rotation.to_rotation_matrix();
    let (t, f) = (s.translation, s.focal);
    let objective = |u: &[f64], g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for (i, p) in targets.iter().enumerate() {
            let c = rot * lin.vertex(i, u) + t;
            if !(c.z > Z_EPSILON) {
                return f64::INFINITY;
            }
            let iz = 1.0 / c.z;
            let rx = f * c.x * iz + principal[0] - p[0];
            let ry = f * c.y * iz + principal[1] - p[1];
            total += rx * rx + ry * ry;
            let dr = Matrix2x3::new(
                f * iz,
                0.0,
                -f * c.x * iz * iz,
                0.0,
                f * iz,
                -f * c.y * iz * iz,
            ) * rot.matrix();
            for (j, gj) in g.iter_mut().enumerate() {
                let d = dr * lin.derivative(i, j);
                *gj += 2.0 * (rx * d.x + ry * d.y);
            }
        }
        total
    };
    let b = cfg.identity_bound;
    let (u, _) = box_qn_minimize(
        objective,
        &vec![-b; nid],
        &vec![b; nid],
        &s.identity,
        &cfg.qn,
    )?;
    s.identity = u;
    Ok(())
}

/// Profiled focal search: every candidate `f` gets its own pose fit, started
/// from the current pose with the translation scaled by `f / f_current` so
/// the projected size stays roughly fixed.
fn focal_step(
    s: &mut ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<()> {
    let basis = rig.landmark_basis(&s.identity)?;
    let pts: Vec<Vector3<f64>> = (0..targets.len())
        .map(|i| basis.vertex(i, &s.expression))
        .collect();
    let (lo, hi) = cfg
        .focal_range
        .unwrap_or((0.25 * 2.0 * principal[0], 8.0 * 2.0 * principal[0]));
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(
            "focal search range must be positive and nonempty",
        ));
    }
    let current = theta_with_basis(s, &basis, targets, principal);
    let base = (s.rotation, s.translation, s.focal);
    let profile = |log_f: f64| -> (f64, UnitQuaternion<f64>, Vector3<f64>) {
        let f = log_f.exp();
        let scale = f / base.2;
        let t0 = base.1 * scale;
        match pnp_refine(&pts, targets, f, principal, base.0, t0, &cfg.pnp) {
            Ok(r) => (r.cost, r.rotation, r.translation),
            Err(_) => (f64::INFINITY, base.0, t0),
        }
    };
    let (llo, lhi) = (lo.ln(), hi.ln());
    let steps = cfg.focal_grid.max(2);
    let grid: Vec<f64> = (0..steps)
        .map(|k| llo + (lhi - llo) * k as f64 / (steps - 1) as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&g| profile(g).0).collect();
    let best = (0..steps)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is nonempty");
    let (mut a, mut b) = (
        grid[best.saturating_sub(1)],
        grid[(best + 1).min(steps - 1)],
    );
    // Golden-section search on the bracketing grid cell pair.
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (profile(c).0, profile(d).0);
    for _ in 0..cfg.golden_iterations {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = profile(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = profile(d).0;
        }
    }
    let mut candidates = [(grid[best], values[best]), (c, fc), (d, fd)];
    candidates.sort_by(|x, y| x.1.total_cmp(&y.1));
    let (log_f, _) = candidates[0];
    let (cost, r, t) = profile(log_f);
    if cost <= current {
        s.focal = log_f.exp();
        s.rotation = r;
        s.translation = t;
    }
    Ok(())
}

/// Joint damped Gauss-Newton over `[ω, t, x, u, f]` restricted to the enabled
/// groups. Coefficients held at a bound by the gradient drop out of a step;
/// steps are projected back into the box and taken only if they lower the
/// objective. Returns the number of accepted steps.
fn polish(
    s: &mut ShapeParams,
    rig: &FaceRig,
    targets: &[[f64; 2]],
    principal: [f64; 2],
    cfg: &FitConfig,
) -> Result<usize> {
    let n = rig.expression_count();
    let nid = rig.identity_count();
    let b = cfg.identity_bound;
    let mut cost = theta(s, rig, targets, principal)?;
    let mut lambda = 1e-4;
    let mut accepted = 0;
    let mut failures = 0;
    for _ in 0..cfg.polish_iterations {
        if cost <= 1e-24 {
            break;
        }
        let mut s0 = s.clone();
        s0.displacement.iter_mut().for_each(|d| *d = [0.0; 2]);
        let jac = landmark_jacobian(&s0, rig, principal)?;
        let mut r = DVector::zeros(2 * targets.len());
        for (i, (q, p)) in jac.landmarks.points().iter().zip(targets).enumerate() {
            r[2 * i] = q[0] - p[0];
            r[2 * i + 1] = q[1] - p[1];
        }
        let grad = jac.matrix.transpose() * &r;
        let mut active: Vec<usize> = (0..6).collect();
        if cfg.fit_expression {
            active.extend(
                (0..n)
                    .filter(|&k| {
                        let (x, g) = (s.expression[k], grad[6 + k]);
                        !((x <= 0.0 && g > 0.0) || (x >= 1.0 && g < 0.0))
                    })
                    .map(|k| 6 + k),
            );
        }
        if cfg.fit_identity {
            active.extend(
                (0..nid)
                    .filter(|&j| {
                        let (u, g) = (s.identity[j], grad[6 + n + j]);
                        !((u <= -b && g > 0.0) || (u >= b && g < 0.0))
                    })
                    .map(|j| 6 + n + j),
            );
        }
        if cfg.fit_focal {
            active.push(6 + n + nid);
        }
        let k = active.len();
        let jm = DMatrix::from_fn(r.len(), k, |row, col| jac.matrix[(row, active[col])]);
        let jtj = jm.transpose() * &jm;
        let jtr = jm.transpose() * &r;
        if jtr.amax() <= 1e-14 * (1.0 + cost) {
            break;
        }
        let mut a = jtj.clone();
        for d in 0..k {
            a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
        }
        let Some(ch) = a.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = ch.solve(&-jtr);
        let mut trial = s.clone();
        for (col, &p) in active.iter().enumerate() {
            let v = step[col];
            match p {
                0..=2 => {}
                3..=5 => trial.translation[p - 3] += v,
                _ if p < 6 + n => {
                    trial.expression[p - 6] = (trial.expression[p - 6] + v).clamp(0.0, 1.0)
                }
                _ if p < 6 + n + nid => {
                    trial.identity[p - 6 - n] = (trial.identity[p - 6 - n] + v).clamp(-b, b)
                }
                _ => trial.focal = (trial.focal + v).max(1e-6 * trial.focal),
            }
        }
        trial.rotation =
            UnitQuaternion::from_scaled_axis(Vector3::new(step[0], step[1], step[2])) * s.rotation;
        let c = theta(&trial, rig, targets, principal)?;
        if c < cost {
            let rel = (cost - c) / cost;
            *s = trial;
            cost = c;
            accepted += 1;
            failures = 0;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-15 {
                break;
            }
        } else {
            lambda *= 10.0;
            failures += 1;
            if failures > 12 {
                break;
            }
        }
    }
    Ok(accepted)
}
