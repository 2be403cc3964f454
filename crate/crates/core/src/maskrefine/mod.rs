//! Probability map to binary face mask.
//!
//! The map and the intensity crop define a two-label grid energy: each pixel
//! pays `-ln p` to be face and `-ln(1 - p)` to be background, and each pair of
//! neighbors with different labels pays `λ·exp(-ΔI²/(2σ))`. The energy is
//! submodular, so a single max-flow gives its global minimum.

mod energy;
mod maxflow;
mod upsample;

pub use energy::{
    build_energy, energy_of, Connectivity, GridEnergy, ProbabilityMap, PROBABILITY_EPSILON,
};
pub use upsample::{resample_nearest, upsample_mask};

use crate::image::{BinaryMask, GrayImage};
use crate::Result;

/// Globally optimal labeling of `energy`. Among equal-energy labelings the
/// one with the most face pixels is returned.
pub fn min_cut(energy: &GridEnergy) -> BinaryMask {
    min_cut_with_flow(energy).0
}

/// [`min_cut`] plus the max-flow value, which equals the minimum energy.
pub fn min_cut_with_flow(energy: &GridEnergy) -> (BinaryMask, f64) {
    let mut g = maxflow::GridFlow::from_energy(energy);
    let flow = g.run();
    (g.labels(), flow)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub lambda: f64,
    pub sigma: f64,
    pub connectivity: Connectivity,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            sigma: 5.0,
            connectivity: Connectivity::Four,
        }
    }
}

/// `build_energy` followed by `min_cut`.
pub fn refine(
    prob: &ProbabilityMap,
    intensity: &GrayImage,
    cfg: &RefineConfig,
) -> Result<BinaryMask> {
    let e = build_energy(prob, intensity, cfg.lambda, cfg.sigma, cfg.connectivity)?;
    Ok(min_cut(&e))
}
