use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{UnitQuaternion, Vector3};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Projected landmark positions in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks2D(pub Vec<[f64; 2]>);

impl Landmarks2D {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.0
    }

    /// Mean Euclidean distance to `other`.
    pub fn mean_error(&self, other: &Landmarks2D) -> f64 {
        let total: f64 = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
            .sum();
        total / self.0.len().max(1) as f64
    }
}

/// Full face state `{R, t, x, D, u, f}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeParams {
    pub rotation: UnitQuaternion<f64>,
    /// Camera-space translation; the camera looks down `+z`.
    pub translation: Vector3<f64>,
    /// Expression coefficients in `[0, 1]`.
    pub expression: Vec<f64>,
    /// Per-landmark 2D offsets in pixels.
    pub displacement: Vec<[f64; 2]>,
    /// Identity coefficients.
    pub identity: Vec<f64>,
    /// Focal length in pixels.
    pub focal: f64,
}

impl ShapeParams {
    /// Neutral expression, zero offsets and identity origin, facing the camera at depth `depth`.
    pub fn neutral(
        expressions: usize,
        landmarks: usize,
        identities: usize,
        depth: f64,
        focal: f64,
    ) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::new(0.0, 0.0, depth),
            expression: vec![0.0; expressions],
            displacement: vec![[0.0; 2]; landmarks],
            identity: vec![0.0; identities],
            focal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0) || !self.focal.is_finite() {
            return Err(Error::invalid("focal length must be positive"));
        }
        if let Some((index, &value)) = self
            .expression
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::CoefficientOutOfRange { index, value });
        }
        let q = self.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation quaternion is not unit length"));
        }
        Ok(())
    }

    pub fn shape_vector(&self) -> ShapeVector {
        ShapeVector::from_params(self)
    }
}

/// The regressed subset `Q = [R, t, x, D]` flattened to
/// `[rotation vector (3) | t (3) | x (n) | D (2m)]`.
///
/// Updates compose the rotation on the left in the tangent space
/// (`R ← exp(δ)·R`); every other block is additive.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeVector {
    data: Vec<f64>,
    expressions: usize,
}

impl ShapeVector {
    pub const ROTATION: core::ops::Range<usize> = 0..3;
    pub const TRANSLATION: core::ops::Range<usize> = 3..6;

    pub fn len_for(expressions: usize, landmarks: usize) -> usize {
        6 + expressions + 2 * landmarks
    }

    pub fn from_params(s: &ShapeParams) -> Self {
        let mut data = Vec::with_capacity(Self::len_for(s.expression.len(), s.displacement.len()));
        data.extend_from_slice(s.rotation.scaled_axis().as_slice());
        data.extend_from_slice(s.translation.as_slice());
        data.extend_from_slice(&s.expression);
        for d in &s.displacement {
            data.extend_from_slice(d);
        }
        Self {
            data,
            expressions: s.expression.len(),
        }
    }

    pub fn from_raw(data: Vec<f64>, expressions: usize) -> Result<Self> {
        if data.len() < 6 + expressions || (data.len() - 6 - expressions) % 2 != 0 {
            return Err(Error::invalid("shape vector length does not match layout"));
        }
        Ok(Self { data, expressions })
    }

    /// Rebuilds the full parameters with the fixed `(u, f)`.
    pub fn to_params(&self, identity: &[f64], focal: f64) -> ShapeParams {
        ShapeParams {
            rotation: self.rotation(),
            translation: self.translation(),
            expression: self.expression().to_vec(),
            displacement: self.displacement().collect(),
            identity: identity.to_vec(),
            focal,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn expression_count(&self) -> usize {
        self.expressions
    }

    pub fn landmark_count(&self) -> usize {
        (self.data.len() - 6 - self.expressions) / 2
    }

    pub fn expression_range(&self) -> core::ops::Range<usize> {
        6..6 + self.expressions
    }

    pub fn displacement_range(&self) -> core::ops::Range<usize> {
        6 + self.expressions..self.data.len()
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(Vector3::new(self.data[0], self.data[1], self.data[2]))
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.data[3], self.data[4], self.data[5])
    }

    pub fn expression(&self) -> &[f64] {
        &self.data[self.expression_range()]
    }

    pub fn expression_mut(&mut self) -> &mut [f64] {
        let r = self.expression_range();
        &mut self.data[r]
    }

    pub fn displacement(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.data[self.displacement_range()]
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
    }

    /// `Q ⊕ δ`.
    pub fn compose(&self, delta: &[f64]) -> ShapeVector {
        debug_assert_eq!(delta.len(), self.data.len());
        let mut out = self.clone();
        out.compose_in_place(delta);
        out
    }

    pub fn compose_in_place(&mut self, delta: &[f64]) {
        if delta[..3] != [0.0; 3] {
            let dr = UnitQuaternion::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2]));
            let r = dr * self.rotation();
            self.data[..3].copy_from_slice(r.scaled_axis().as_slice());
        }
        for (v, d) in self.data[3..].iter_mut().zip(&delta[3..]) {
            *v += d;
        }
    }

    /// `self ⊖ base`: the update that carries `base` to `self`.
    pub fn difference(&self, base: &ShapeVector) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        out[..3].copy_from_slice(&self.rotation_difference(base));
        for i in 3..self.data.len() {
            out[i] = self.data[i] - base.data[i];
        }
        out
    }

    /// Rotation block of [`difference`](Self::difference): `log(R_self · R_baseᵀ)`.
    pub fn rotation_difference(&self, base: &ShapeVector) -> [f64; 3] {
        if self.data[..3] == base.data[..3] {
            return [0.0; 3];
        }
        let dr = self.rotation() * base.rotation().inverse();
        let v = dr.scaled_axis();
        [v.x, v.y, v.z]
    }

    /// Clamps expression coefficients into `[0, 1]`.
    pub fn clamp_expression(&mut self) {
        for v in self.expression_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(rot: [f64; 3], x: Vec<f64>, d: Vec<[f64; 2]>) -> ShapeParams {
        ShapeParams {
            rotation: UnitQuaternion::from_scaled_axis(Vector3::from(rot)),
            translation: Vector3::new(0.1, -0.2, 4.0),
            expression: x,
            displacement: d,
            identity: vec![0.5, -0.5],
            focal: 300.0,
        }
    }

    proptest! {
        #[test]
        fn shape_vector_round_trip(
            rx in -1.5..1.5f64, ry in -1.5..1.5f64, rz in -1.5..1.5f64,
            x in proptest::collection::vec(0.0..=1.0f64, 4),
            d in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 5),
        ) {
            let d: Vec<[f64; 2]> = d.into_iter().map(|(a, b)| [a, b]).collect();
            let s = params([rx, ry, rz], x, d);
            let q = ShapeVector::from_params(&s);
            prop_assert_eq!(q.len(), ShapeVector::len_for(4, 5));
            let back = q.to_params(&s.identity, s.focal);
            prop_assert!(back.rotation.angle_to(&s.rotation) < 1e-12);
            prop_assert_eq!(&back.expression, &s.expression);
            prop_assert_eq!(&back.displacement, &s.displacement);
            prop_assert_eq!(back.translation, s.translation);
        }

        #[test]
        fn compose_undoes_difference(
            a in proptest::collection::vec(-1.0..1.0f64, 3),
            b in proptest::collection::vec(-1.0..1.0f64, 3),
        ) {
            let qa = ShapeVector::from_params(&params([a[0], a[1], a[2]], vec![0.2], vec![[1.0, 2.0]]));
            let qb = ShapeVector::from_params(&params([b[0], b[1], b[2]], vec![0.7], vec![[-1.0, 0.5]]));
            let delta = qa.difference(&qb);
            let back = qb.compose(&delta);
            prop_assert!(back.rotation().angle_to(&qa.rotation()) < 1e-10);
            for i in 3..qa.len() {
                prop_assert!((back.as_slice()[i] - qa.as_slice()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validate_rejects_bad_state() {
        let mut s = params([0.0; 3], vec![0.5], vec![]);
        assert!(s.validate().is_ok());
        s.focal = 0.0;
        assert!(s.validate().is_err());
        s.focal = 10.0;
        s.expression[0] = 1.5;
        assert!(matches!(
            s.validate(),
            Err(Error::CoefficientOutOfRange { .. })
        ));
    }
}
