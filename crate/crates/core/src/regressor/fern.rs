use alloc::vec::Vec;

/// A depth-`F` fern: `F` thresholded intensity differences select one of
/// `2^F` bins, each holding a shape-vector update.
#[derive(Debug, Clone, PartialEq)]
pub struct Fern {
    /// Feature point index pairs; level `l` compares `f[a] − f[b]`.
    pub pairs: Vec<[u16; 2]>,
    pub thresholds: Vec<f32>,
    /// `2^F` updates of length `dim`, row-major.
    pub bins: Vec<f32>,
    pub dim: usize,
}

impl Fern {
    pub fn depth(&self) -> usize {
        self.pairs.len()
    }

    pub fn bin_count(&self) -> usize {
        1 << self.pairs.len()
    }

    /// Bit `l` is set when level `l`'s difference reaches its threshold.
    #[inline]
    pub fn bin_index(&self, features: &[f32]) -> usize {
        let mut idx = 0;
        for (l, (p, &thr)) in self.pairs.iter().zip(&self.thresholds).enumerate() {
            if features[p[0] as usize] - features[p[1] as usize] >= thr {
                idx |= 1 << l;
            }
        }
        idx
    }

    pub fn bin(&self, index: usize) -> &[f32] {
        &self.bins[index * self.dim..(index + 1) * self.dim]
    }
}
