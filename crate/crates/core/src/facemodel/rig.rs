use alloc::vec;
use alloc::vec::Vec;
use nalgebra::Vector3;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Landmark count of the full-size model.
pub const DEFAULT_LANDMARKS: usize = 73;
/// FACS expression blendshape count of the full-size model.
pub const DEFAULT_EXPRESSIONS: usize = 46;
/// PCA identity basis count of the full-size model.
pub const DEFAULT_IDENTITIES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RigDims {
    /// Mesh vertex count `V`.
    pub vertices: usize,
    /// Expression blendshape count `n`.
    pub expressions: usize,
    /// Identity basis count `n_id`.
    pub identities: usize,
    /// Landmark count `m`.
    pub landmarks: usize,
}

impl RigDims {
    /// Full-size dimensions for a mesh of `vertices` vertices.
    pub fn full(vertices: usize) -> Self {
        Self {
            vertices,
            expressions: DEFAULT_EXPRESSIONS,
            identities: DEFAULT_IDENTITIES,
            landmarks: DEFAULT_LANDMARKS,
        }
    }
}

/// What to do with expression coefficients outside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientPolicy {
    /// Training targets must be in range.
    Reject,
    /// Inference clamps and logs.
    Clamp,
}

/// Identity-parameterized blendshape rig.
///
/// The core tensor is stored as `(3V) × (n + 1) × (n_id + 1)`, row-major in that
/// order. Expression slice 0 is the neutral face, slices `1..=n` are blendshape
/// deltas. Identity slice 0 is the origin of the identity space and slices
/// `1..=n_id` are the identity bases, so `[b0, B] = C[.., .., 0] + Σ_j u_j C[.., .., j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceRig {
    dims: RigDims,
    core: Vec<f64>,
    mean_landmarks: Vec<[f64; 2]>,
    landmark_indices: Vec<usize>,
    triangles: Vec<[usize; 3]>,
    eye_corners: [usize; 2],
}

impl FaceRig {
    pub fn new(
        dims: RigDims,
        core: Vec<f64>,
        mean_landmarks: Vec<[f64; 2]>,
        landmark_indices: Vec<usize>,
        triangles: Vec<[usize; 3]>,
        eye_corners: [usize; 2],
    ) -> Result<Self> {
        let expected = 3 * dims.vertices * (dims.expressions + 1) * (dims.identities + 1);
        Error::check_len("core tensor", expected, core.len())?;
        Error::check_len("mean landmarks", dims.landmarks, mean_landmarks.len())?;
        Error::check_len("landmark indices", dims.landmarks, landmark_indices.len())?;
        if dims.vertices == 0 || dims.landmarks == 0 {
            return Err(Error::invalid("rig needs at least one vertex and landmark"));
        }
        if let Some(&bad) = landmark_indices.iter().find(|&&i| i >= dims.vertices) {
            return Err(Error::invalid(alloc::format!(
                "landmark vertex index {bad} out of range (V = {})",
                dims.vertices
            )));
        }
        if triangles.iter().flatten().any(|&i| i >= dims.vertices) {
            return Err(Error::invalid("triangle references a missing vertex"));
        }
        if eye_corners.iter().any(|&i| i >= dims.landmarks) {
            return Err(Error::invalid("eye corner landmark out of range"));
        }
        if core.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("core tensor"));
        }
        if mean_landmarks.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mean landmarks"));
        }
        Ok(Self {
            dims,
            core,
            mean_landmarks,
            landmark_indices,
            triangles,
            eye_corners,
        })
    }

    pub fn dims(&self) -> RigDims {
        self.dims
    }

    pub fn expression_count(&self) -> usize {
        self.dims.expressions
    }

    pub fn identity_count(&self) -> usize {
        self.dims.identities
    }

    pub fn landmark_count(&self) -> usize {
        self.dims.landmarks
    }

    pub fn vertex_count(&self) -> usize {
        self.dims.vertices
    }

    pub fn core_tensor(&self) -> &[f64] {
        &self.core
    }

    /// Mean 2D landmarks in unit-square coordinates.
    pub fn mean_landmarks(&self) -> &[[f64; 2]] {
        &self.mean_landmarks
    }

    pub fn landmark_indices(&self) -> &[usize] {
        &self.landmark_indices
    }

    /// Mesh triangles, used for rendering only.
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Landmark indices of the two outer eye corners.
    pub fn eye_corners(&self) -> [usize; 2] {
        self.eye_corners
    }

    #[inline]
    fn core_index(&self, row: usize, expr: usize, id: usize) -> usize {
        (row * (self.dims.expressions + 1) + expr) * (self.dims.identities + 1) + id
    }

    /// Tensor entry `C[row, expr, id]`, with `id = 0` the identity origin.
    #[inline]
    pub fn core_at(&self, row: usize, expr: usize, id: usize) -> f64 {
        self.core[self.core_index(row, expr, id)]
    }

    fn check_identity(&self, u: &[f64]) -> Result<()> {
        Error::check_len("identity coefficients", self.dims.identities, u.len())
    }

    /// Contracts the core tensor with `u` over the given vertices.
    fn contract(&self, u: &[f64], vertices: &[usize]) -> ShapeBasis {
        let n = self.dims.expressions;
        let nid = self.dims.identities;
        let mut neutral = Vec::with_capacity(3 * vertices.len());
        let mut deltas = Vec::with_capacity(3 * vertices.len() * n);
        let mut row_out = vec![0.0; n + 1];
        for &v in vertices {
            for c in 0..3 {
                let row = 3 * v + c;
                for (e, out) in row_out.iter_mut().enumerate() {
                    let base = self.core_index(row, e, 0);
                    let slab = &self.core[base..base + nid + 1];
                    let mut acc = slab[0];
                    for (coef, w) in u.iter().zip(&slab[1..]) {
                        acc += coef * w;
                    }
                    *out = acc;
                }
                neutral.push(row_out[0]);
                deltas.extend_from_slice(&row_out[1..]);
            }
        }
        ShapeBasis {
            expression_count: n,
            neutral,
            deltas,
        }
    }

    /// `[b0, B] = C_r × u` over the whole mesh.
    pub fn evaluate(&self, u: &[f64]) -> Result<ShapeBasis> {
        self.check_identity(u)?;
        let all: Vec<usize> = (0..self.dims.vertices).collect();
        Ok(self.contract(u, &all))
    }

    /// `[b0, B]` restricted to the landmark vertices, in landmark order.
    pub fn landmark_basis(&self, u: &[f64]) -> Result<ShapeBasis> {
        self.check_identity(u)?;
        Ok(self.contract(u, &self.landmark_indices))
    }

    /// Mesh vertices `b0 + B·x` for identity `u` and expression `x`.
    pub fn shape_vertices(
        &self,
        u: &[f64],
        x: &[f64],
        policy: CoefficientPolicy,
    ) -> Result<Vec<Vector3<f64>>> {
        let x = checked_expression(x, self.dims.expressions, policy)?;
        let basis = self.evaluate(u)?;
        Ok((0..self.dims.vertices)
            .map(|i| basis.vertex(i, &x))
            .collect())
    }

    /// Derivative of landmark vertex `landmark` with respect to each identity
    /// coefficient, at expression `x`.
    pub fn landmark_identity_derivatives(&self, landmark: usize, x: &[f64]) -> Vec<Vector3<f64>> {
        let v = self.landmark_indices[landmark];
        let nid = self.dims.identities;
        let mut out = vec![Vector3::zeros(); nid];
        for c in 0..3 {
            let row = 3 * v + c;
            for (j, d) in out.iter_mut().enumerate() {
                let mut acc = self.core_at(row, 0, j + 1);
                for (k, xk) in x.iter().enumerate() {
                    acc += xk * self.core_at(row, k + 1, j + 1);
                }
                d[c] = acc;
            }
        }
        out
    }

    /// Landmark distance used to normalize errors.
    pub fn interocular_distance(&self, landmarks: &[[f64; 2]]) -> f64 {
        let [a, b] = self.eye_corners;
        let (p, q) = (landmarks[a], landmarks[b]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }
}

/// Checks (or clamps) expression coefficients against `[0, 1]`.
pub(crate) fn checked_expression(
    x: &[f64],
    n: usize,
    policy: CoefficientPolicy,
) -> Result<Vec<f64>> {
    Error::check_len("expression coefficients", n, x.len())?;
    let mut out = x.to_vec();
    for (index, v) in out.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite("expression coefficients"));
        }
        if *v < 0.0 || *v > 1.0 {
            match policy {
                CoefficientPolicy::Reject => {
                    return Err(Error::CoefficientOutOfRange { index, value: *v })
                }
                CoefficientPolicy::Clamp => {
                    log::warn!("clamping expression coefficient {index} = {v}");
                    *v = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Neutral shape and blendshape deltas for one identity over a vertex subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeBasis {
    expression_count: usize,
    /// `3 × vertices`, xyz interleaved.
    neutral: Vec<f64>,
    /// `3 × vertices × n`, row `(3i + c)` holds the `n` blendshape deltas.
    deltas: Vec<f64>,
}

impl ShapeBasis {
    pub fn vertex_count(&self) -> usize {
        self.neutral.len() / 3
    }

    pub fn expression_count(&self) -> usize {
        self.expression_count
    }

    /// Flattened neutral shape `b0` (length `3V`).
    pub fn neutral(&self) -> &[f64] {
        &self.neutral
    }

    /// Flattened blendshapes `B`, `(3V) × n` row-major.
    pub fn blendshapes(&self) -> &[f64] {
        &self.deltas
    }

    pub fn neutral_vertex(&self, i: usize) -> Vector3<f64> {
        Vector3::new(
            self.neutral[3 * i],
            self.neutral[3 * i + 1],
            self.neutral[3 * i + 2],
        )
    }

    /// Delta of blendshape `k` at vertex `i`.
    #[inline]
    pub fn delta(&self, i: usize, k: usize) -> Vector3<f64> {
        let n = self.expression_count;
        Vector3::new(
            self.deltas[(3 * i) * n + k],
            self.deltas[(3 * i + 1) * n + k],
            self.deltas[(3 * i + 2) * n + k],
        )
    }

    /// `b0_i + B_i·x`.
    #[inline]
    pub fn vertex(&self, i: usize, x: &[f64]) -> Vector3<f64> {
        let n = self.expression_count;
        let mut out = self.neutral_vertex(i);
        for c in 0..3 {
            let row = &self.deltas[(3 * i + c) * n..(3 * i + c + 1) * n];
            let mut acc = 0.0;
            for (w, xk) in row.iter().zip(x) {
                acc += w * xk;
            }
            out[c] += acc;
        }
        out
    }
}
