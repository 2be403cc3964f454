use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::image::{check_same_dims, BinaryMask, GrayImage};
use crate::{Error, Result};

/// Clamp applied to probabilities before taking logarithms.
pub const PROBABILITY_EPSILON: f64 = 1e-6;

/// Per-pixel face likelihood in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    /// Default working resolution of the segmentation stage.
    pub const SIZE: usize = 128;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("probability map must be nonempty"));
        }
        Error::check_len("probability map", width * height, data.len())?;
        if data.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, p: f64) -> Result<Self> {
        Self::new(width, height, vec![p; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Hard labeling at `p ≥ 0.5`.
    pub fn threshold(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y) >= 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Four,
    /// Adds diagonal neighbors, weighted by `1/√2`.
    Eight,
}

/// Two-label grid energy: unary costs per pixel and contrast weights per
/// neighbor pair. A pair pays `λ·θ_ij` when its labels disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEnergy {
    pub(crate) width: usize,
    pub(crate) height: usize,
    /// Cost of labeling the pixel face, `-ln p`.
    pub(crate) face_cost: Vec<f64>,
    /// Cost of labeling the pixel non-face, `-ln(1 - p)`.
    pub(crate) background_cost: Vec<f64>,
    /// `θ` to the right neighbor (`x + 1`); zero in the last column.
    pub(crate) right: Vec<f64>,
    /// `θ` to the lower neighbor (`y + 1`); zero in the last row.
    pub(crate) down: Vec<f64>,
    /// `θ/√2` to `(x + 1, y + 1)`; empty for 4-connectivity.
    pub(crate) down_right: Vec<f64>,
    /// `θ/√2` to `(x - 1, y + 1)`; empty for 4-connectivity.
    pub(crate) down_left: Vec<f64>,
    pub(crate) lambda: f64,
}

impl GridEnergy {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn connectivity(&self) -> Connectivity {
        if self.down_right.is_empty() {
            Connectivity::Four
        } else {
            Connectivity::Eight
        }
    }

    /// Sink-side unary `θ_i(sink) = -ln p_i`, paid by face pixels.
    pub fn face_cost(&self, x: usize, y: usize) -> f64 {
        self.face_cost[y * self.width + x]
    }

    /// Source-side unary `θ_i(source) = -ln(1 - p_i)`, paid by non-face pixels.
    pub fn background_cost(&self, x: usize, y: usize) -> f64 {
        self.background_cost[y * self.width + x]
    }

    pub fn right_weight(&self, x: usize, y: usize) -> f64 {
        self.right[y * self.width + x]
    }

    pub fn down_weight(&self, x: usize, y: usize) -> f64 {
        self.down[y * self.width + x]
    }

    /// Builds an energy from raw parts; used by tests and tools that bring
    /// their own costs. `right`/`down` are `width × height` grids.
    pub fn from_parts(
        width: usize,
        height: usize,
        face_cost: Vec<f64>,
        background_cost: Vec<f64>,
        right: Vec<f64>,
        down: Vec<f64>,
        lambda: f64,
    ) -> Result<Self> {
        let n = width * height;
        for (what, v) in [
            ("face costs", &face_cost),
            ("background costs", &background_cost),
            ("right weights", &right),
            ("down weights", &down),
        ] {
            Error::check_len(what, n, v.len())?;
            if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::invalid(
                    "energy terms must be finite and nonnegative",
                ));
            }
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        let mut e = Self {
            width,
            height,
            face_cost,
            background_cost,
            right,
            down,
            down_right: Vec::new(),
            down_left: Vec::new(),
            lambda,
        };
        e.zero_borders();
        Ok(e)
    }

    fn zero_borders(&mut self) {
        let (w, h) = (self.width, self.height);
        for y in 0..h {
            self.right[y * w + w - 1] = 0.0;
            if !self.down_left.is_empty() {
                self.down_left[y * w] = 0.0;
                self.down_right[y * w + w - 1] = 0.0;
            }
        }
        for x in 0..w {
            self.down[(h - 1) * w + x] = 0.0;
            if !self.down_right.is_empty() {
                self.down_right[(h - 1) * w + x] = 0.0;
                self.down_left[(h - 1) * w + x] = 0.0;
            }
        }
    }
}

#[inline]
fn contrast(a: f64, b: f64, sigma: f64) -> f64 {
    let d = a - b;
    (-(d * d) / (2.0 * sigma)).exp()
}

/// Unary and contrast-sensitive pairwise terms for `prob` over `intensity`.
pub fn build_energy(
    prob: &ProbabilityMap,
    intensity: &GrayImage,
    lambda: f64,
    sigma: f64,
    connectivity: Connectivity,
) -> Result<GridEnergy> {
    check_same_dims("intensity image", prob.dims(), intensity.dims())?;
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda must be finite and nonnegative"));
    }
    let (w, h) = prob.dims();
    let n = w * h;
    let lo = PROBABILITY_EPSILON;
    let hi = 1.0 - PROBABILITY_EPSILON;
    let mut face_cost = Vec::with_capacity(n);
    let mut background_cost = Vec::with_capacity(n);
    for &p in prob.as_slice() {
        face_cost.push(-p.clamp(lo, hi).ln());
        background_cost.push(-(1.0 - p).clamp(lo, hi).ln());
    }
    let img = intensity.as_slice();
    let mut right = vec![0.0; n];
    let mut down = vec![0.0; n];
    for y in 0..h {
        let row = y * w;
        for x in 0..w - 1 {
            right[row + x] = contrast(img[row + x], img[row + x + 1], sigma);
        }
        if y + 1 < h {
            for x in 0..w {
                down[row + x] = contrast(img[row + x], img[row + w + x], sigma);
            }
        }
    }
    let (mut down_right, mut down_left) = (Vec::new(), Vec::new());
    if connectivity == Connectivity::Eight {
        down_right = vec![0.0; n];
        down_left = vec![0.0; n];
        let k = core::f64::consts::FRAC_1_SQRT_2;
        for y in 0..h.saturating_sub(1) {
            let row = y * w;
            for x in 0..w {
                if x + 1 < w {
                    down_right[row + x] = k * contrast(img[row + x], img[row + w + x + 1], sigma);
                }
                if x > 0 {
                    down_left[row + x] = k * contrast(img[row + x], img[row + w + x - 1], sigma);
                }
            }
        }
    }
    Ok(GridEnergy {
        width: w,
        height: h,
        face_cost,
        background_cost,
        right,
        down,
        down_right,
        down_left,
        lambda,
    })
}

/// Energy of a labeling: unaries plus `λ·θ_ij` over disagreeing neighbor pairs.
pub fn energy_of(labels: &BinaryMask, energy: &GridEnergy) -> Result<f64> {
    check_same_dims("labeling", labels.dims(), (energy.width, energy.height))?;
    let (w, h) = labels.dims();
    let l = labels.as_slice();
    let mut unary = 0.0;
    for i in 0..w * h {
        unary += if l[i] {
            energy.face_cost[i]
        } else {
            energy.background_cost[i]
        };
    }
    let mut pairwise = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && l[i] != l[i + 1] {
                pairwise += energy.right[i];
            }
            if y + 1 < h && l[i] != l[i + w] {
                pairwise += energy.down[i];
            }
            if !energy.down_right.is_empty() && y + 1 < h {
                if x + 1 < w && l[i] != l[i + w + 1] {
                    pairwise += energy.down_right[i];
                }
                if x > 0 && l[i] != l[i + w - 1] {
                    pairwise += energy.down_left[i];
                }
            }
        }
    }
    Ok(unary + energy.lambda * pairwise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(w: usize, h: usize, v: f64) -> GrayImage {
        GrayImage::filled(w, h, v)
    }

    #[test]
    fn half_probability_costs_ln2() {
        let p = ProbabilityMap::uniform(2, 2, 0.5).unwrap();
        let e = build_energy(&p, &flat(2, 2, 0.0), 10.0, 5.0, Connectivity::Four).unwrap();
        let ln2 = core::f64::consts::LN_2;
        assert!((e.face_cost(0, 0) - ln2).abs() < 1e-12);
        assert!((e.background_cost(1, 1) - ln2).abs() < 1e-12);
    }

    #[test]
    fn equal_intensity_weight_is_one() {
        let p = ProbabilityMap::uniform(3, 3, 0.3).unwrap();
        let e = build_energy(&p, &flat(3, 3, 77.0), 10.0, 5.0, Connectivity::Four).unwrap();
        assert_eq!(e.right_weight(0, 0), 1.0);
        assert_eq!(e.down_weight(2, 1), 1.0);
        assert_eq!(e.right_weight(2, 0), 0.0);
    }

    #[test]
    fn contrast_spot_value() {
        let p = ProbabilityMap::uniform(2, 1, 0.5).unwrap();
        let img = GrayImage::from_vec(2, 1, vec![100.0, 110.0]).unwrap();
        let e = build_energy(&p, &img, 10.0, 5.0, Connectivity::Four).unwrap();
        assert!((e.right_weight(0, 0) - (-10.0f64).exp()).abs() < 1e-12);
        assert!((e.right_weight(0, 0) - 4.539_992_976_248_485e-5).abs() < 1e-15);
    }

    #[test]
    fn extreme_probabilities_are_finite() {
        let p = ProbabilityMap::new(2, 1, vec![0.0, 1.0]).unwrap();
        let e = build_energy(&p, &flat(2, 1, 0.0), 10.0, 5.0, Connectivity::Four).unwrap();
        for c in e.face_cost.iter().chain(&e.background_cost) {
            assert!(c.is_finite() && *c >= 0.0);
        }
        assert!((e.face_cost(0, 0) - 1e6f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = ProbabilityMap::uniform(2, 2, 0.5).unwrap();
        assert!(build_energy(&p, &flat(3, 2, 0.0), 10.0, 5.0, Connectivity::Four).is_err());
        assert!(build_energy(&p, &flat(2, 2, 0.0), 10.0, 0.0, Connectivity::Four).is_err());
        assert!(ProbabilityMap::new(1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn all_face_energy_is_sum_of_face_costs() {
        let p = ProbabilityMap::from_fn(3, 2, |x, y| 0.1 + 0.1 * (x + y) as f64).unwrap();
        let img = GrayImage::from_fn(3, 2, |x, y| (x * 20 + y * 7) as f64);
        let e = build_energy(&p, &img, 10.0, 5.0, Connectivity::Four).unwrap();
        let all = BinaryMask::new(3, 2, true);
        let want: f64 = e.face_cost.iter().sum();
        assert!((energy_of(&all, &e).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn two_pixel_disagreement() {
        let p = ProbabilityMap::new(2, 1, vec![0.8, 0.3]).unwrap();
        let img = GrayImage::from_vec(2, 1, vec![10.0, 12.0]).unwrap();
        let e = build_energy(&p, &img, 10.0, 5.0, Connectivity::Four).unwrap();
        let labels = BinaryMask::from_vec(2, 1, vec![true, false]).unwrap();
        let want = -(0.8f64).ln() - (0.7f64).ln() + 10.0 * (-4.0f64 / 10.0).exp();
        assert!((energy_of(&labels, &e).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_double_loop() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(5);
        for _ in 0..50 {
            let p = ProbabilityMap::from_fn(3, 3, |_, _| rng.random()).unwrap();
            let img = GrayImage::from_fn(3, 3, |_, _| rng.random_range(0.0..255.0));
            let lam = rng.random_range(0.0..20.0);
            let e = build_energy(&p, &img, lam, 5.0, Connectivity::Four).unwrap();
            let labels = BinaryMask::from_fn(3, 3, |_, _| rng.random());
            // Every unordered neighbor pair, visited from both endpoints and halved.
            let mut want = 0.0;
            for y in 0..3i32 {
                for x in 0..3i32 {
                    let pi = p.get(x as usize, y as usize).clamp(1e-6, 1.0 - 1e-6);
                    let li = labels.get(x as usize, y as usize);
                    want += if li { -pi.ln() } else { -(1.0 - pi).ln() };
                    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                        let (nx, ny) = (x + dx, y + dy);
                        if !(0..3).contains(&nx) || !(0..3).contains(&ny) {
                            continue;
                        }
                        if labels.get(nx as usize, ny as usize) != li {
                            let d =
                                img.get(x as usize, y as usize) - img.get(nx as usize, ny as usize);
                            want += 0.5 * lam * (-d * d / 10.0).exp();
                        }
                    }
                }
            }
            assert!((energy_of(&labels, &e).unwrap() - want).abs() < 1e-9);
        }
    }
}
