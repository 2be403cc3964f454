//! Bounded quasi-Newton minimization, rigid pose refinement, landmark fitting
//! and the keyframe identity/focal solve.

mod boxqn;
mod fit;
mod identity;
mod linear;
mod pnp;

pub use boxqn::{box_qn_minimize, BoxQnConfig};
pub use fit::{fit_ground_truth, reconstruction_objective, FitConfig, FitResult};
pub use identity::{
    identity_objective, solve_identity_focal, IdentityConfig, IdentitySolution, Keyframe,
};
pub use pnp::{pnp_refine, pnp_residuals, PnpConfig, PnpResult};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub gradient_norm: f64,
}
