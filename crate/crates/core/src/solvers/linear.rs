use alloc::vec::Vec;
use nalgebra::Vector3;

use crate::facemodel::FaceRig;

/// Landmark vertices as an affine function of the identity coefficients at a
/// fixed expression: `v_i(u) = a_i0 + Σ_j u_j·a_ij`.
pub(crate) struct IdentityLinear {
    identities: usize,
    /// Per landmark, `nid + 1` columns of 3-vectors.
    columns: Vec<Vector3<f64>>,
}

impl IdentityLinear {
    pub(crate) fn new(rig: &FaceRig, x: &[f64]) -> Self {
        let nid = rig.identity_count();
        let mut columns = Vec::with_capacity(rig.landmark_count() * (nid + 1));
        for &v in rig.landmark_indices() {
            for j in 0..=nid {
                let mut col = Vector3::zeros();
                for c in 0..3 {
                    let row = 3 * v + c;
                    let mut acc = rig.core_at(row, 0, j);
                    for (k, xk) in x.iter().enumerate() {
                        acc += xk * rig.core_at(row, k + 1, j);
                    }
                    col[c] = acc;
                }
                columns.push(col);
            }
        }
        Self {
            identities: nid,
            columns,
        }
    }

    pub(crate) fn landmarks(&self) -> usize {
        self.columns.len() / (self.identities + 1)
    }

    pub(crate) fn vertex(&self, i: usize, u: &[f64]) -> Vector3<f64> {
        let cols = &self.columns[i * (self.identities + 1)..(i + 1) * (self.identities + 1)];
        let mut v = cols[0];
        for (c, uj) in cols[1..].iter().zip(u) {
            v += c * *uj;
        }
        v
    }

    /// `∂v_i/∂u_j`.
    pub(crate) fn derivative(&self, i: usize, j: usize) -> &Vector3<f64> {
        &self.columns[i * (self.identities + 1) + j + 1]
    }
}
